//! Shared secret phase-shift generation.
//!
//! A counter block addressing `(epoch, block, counter)` is encrypted with AES
//! and the ciphertext bits are grouped into M-PSK symbols. Every block `k`
//! gets one CP1 symbol `C_k` followed by `N_c` subcarrier phases `Θ_k`, all
//! taken from the counter stream of that block, so any plan can be generated
//! without touching earlier blocks.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::{Aes128, Aes256};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{config_err, input_err, Error, Result};
use crate::registry::{Named, Registry};

/// AES key shared by the legitimate transmitter and receiver.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    bytes: Vec<u8>,
}

impl SecretKey {
    pub fn new(bytes: &[u8]) -> Result<Self> {
        match bytes.len() {
            16 | 32 => Ok(Self {
                bytes: bytes.to_vec(),
            }),
            n => config_err(format!("secret key must be 16 or 32 bytes, got {n}")),
        }
    }

    /// Parses a key given as 32 or 64 hex characters.
    pub fn from_hex(text: &str) -> Result<Self> {
        let bytes = hex::decode(text.trim())
            .map_err(|e| Error::Config(format!("key is not valid hex: {e}")))?;
        Self::new(&bytes)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Draws a fresh random key, used by adversaries that need private randomness.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = vec![0u8; 16];
        rng.fill(&mut bytes[..]);
        Self { bytes }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({} bytes)", self.bytes.len())
    }
}

/// Address of a 128-bit keystream chunk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct StreamState {
    pub epoch: u32,
    pub block_index: u64,
    pub intra_block_counter: u32,
}

impl StreamState {
    pub fn new(epoch: u32, block_index: u64) -> Self {
        Self {
            epoch,
            block_index,
            intra_block_counter: 0,
        }
    }

    /// Counter block layout: epoch (4 bytes BE) | block index (8 bytes BE) | counter (4 bytes BE).
    pub fn counter_block(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..4].copy_from_slice(&self.epoch.to_be_bytes());
        out[4..12].copy_from_slice(&self.block_index.to_be_bytes());
        out[12..].copy_from_slice(&self.intra_block_counter.to_be_bytes());
        out
    }

    pub fn advanced(&self, chunks: u32) -> Self {
        Self {
            intra_block_counter: self.intra_block_counter + chunks,
            ..*self
        }
    }
}

#[derive(Clone)]
enum Cipher {
    Aes128(Aes128),
    Aes256(Aes256),
}

/// AES block encryptor keyed once and shared between workers.
#[derive(Clone)]
pub struct BlockEncryptor {
    cipher: Cipher,
}

impl BlockEncryptor {
    pub fn new(key: &SecretKey) -> Self {
        let cipher = match key.bytes.len() {
            16 => Cipher::Aes128(Aes128::new(GenericArray::from_slice(&key.bytes))),
            _ => Cipher::Aes256(Aes256::new(GenericArray::from_slice(&key.bytes))),
        };
        Self { cipher }
    }

    pub fn encrypt(&self, block: [u8; 16]) -> [u8; 16] {
        let mut b = GenericArray::from(block);
        match &self.cipher {
            Cipher::Aes128(c) => c.encrypt_block(&mut b),
            Cipher::Aes256(c) => c.encrypt_block(&mut b),
        }
        b.into()
    }

    /// Counter-mode bits starting at `state`, MSB first within each byte.
    pub fn bits(&self, state: StreamState, n_bits: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(n_bits);
        let mut st = state;
        while out.len() < n_bits {
            let chunk = self.encrypt(st.counter_block());
            for byte in chunk {
                for shift in (0..8).rev() {
                    if out.len() == n_bits {
                        break;
                    }
                    out.push((byte >> shift) & 1 == 1);
                }
            }
            st = st.advanced(1);
        }
        out
    }
}

pub fn derive_bits(key: &SecretKey, state: StreamState, n_bits: usize) -> Result<Vec<bool>> {
    if n_bits == 0 {
        return input_err("n_bits must be positive");
    }
    Ok(BlockEncryptor::new(key).bits(state, n_bits))
}

pub(crate) fn bits_per_symbol(order: u32) -> Result<u32> {
    if order < 2 || !order.is_power_of_two() {
        return config_err(format!("PSK order must be a power of two >= 2, got {order}"));
    }
    Ok(order.trailing_zeros())
}

/// Angle of PSK index `v` out of `order`.
pub fn psk_angle(v: u32, order: u32) -> f64 {
    2.0 * PI * f64::from(v) / f64::from(order)
}

/// Groups bits into big-endian words of `log2(order)` bits, returning the
/// PSK indices `v`; the associated angle is `2πv/order`.
pub fn map_psk(bits: &[bool], order: u32) -> Result<Vec<u32>> {
    let width = bits_per_symbol(order)? as usize;
    if !bits.len().is_multiple_of(width) {
        return input_err(format!(
            "bit length {} is not a multiple of log2(M) = {width}",
            bits.len()
        ));
    }
    Ok(bits
        .chunks(width)
        .map(|g| g.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b)))
        .collect())
}

/// Per-block secret randomness: CP1 rotation `C_k` and subcarrier phases `Θ_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePlan {
    pub block_index: u64,
    pub cp_phase: Complex64,
    pub subcarrier_phases: Vec<f64>,
}

impl PhasePlan {
    /// Plan that leaves the waveform untouched (classical OFDM).
    pub fn identity(block_index: u64, n_carriers: usize) -> Self {
        Self {
            block_index,
            cp_phase: Complex64::new(1.0, 0.0),
            subcarrier_phases: vec![0.0; n_carriers],
        }
    }

    pub fn from_indices(block_index: u64, cp: u32, subcarriers: &[u32], order: u32) -> Self {
        Self {
            block_index,
            cp_phase: Complex64::from_polar(1.0, psk_angle(cp, order)),
            subcarrier_phases: subcarriers.iter().map(|&v| psk_angle(v, order)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.subcarrier_phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subcarrier_phases.is_empty()
    }

    /// `e^{jΘ_{k,i}}`, the secure-decoding rotation of carrier `i`.
    pub fn rotation(&self, i: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.subcarrier_phases[i])
    }
}

/// Keystream handle: key schedule plus epoch, yielding plans by block index.
#[derive(Clone)]
pub struct Keystream {
    encryptor: BlockEncryptor,
    epoch: u32,
    order: u32,
    n_carriers: usize,
}

impl Keystream {
    pub fn new(key: &SecretKey, epoch: u32, order: u32, n_carriers: usize) -> Result<Self> {
        bits_per_symbol(order)?;
        if n_carriers == 0 {
            return config_err("n_carriers must be positive");
        }
        Ok(Self {
            encryptor: BlockEncryptor::new(key),
            epoch,
            order,
            n_carriers,
        })
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn plan(&self, k: u64) -> PhasePlan {
        let width = self.order.trailing_zeros() as usize;
        let bits = self
            .encryptor
            .bits(StreamState::new(self.epoch, k), (self.n_carriers + 1) * width);
        let idx = map_psk(&bits, self.order).expect("width divides bit count");
        PhasePlan::from_indices(k, idx[0], &idx[1..], self.order)
    }

    /// Sequential walk over consecutive blocks starting at `first`.
    pub fn plans_from(&self, first: u64) -> impl Iterator<Item = PhasePlan> + '_ {
        (first..).map(move |k| self.plan(k))
    }
}

/// Generates `C_k` together with `Θ_k` for block `k`.
pub fn phase_plan(
    key: &SecretKey,
    epoch: u32,
    k: u64,
    n_carriers: usize,
    order: u32,
) -> Result<PhasePlan> {
    Ok(Keystream::new(key, epoch, order, n_carriers)?.plan(k))
}

/// Source of per-block phase plans used by the transmitter and receiver.
pub trait PlanSource: Send + Sync {
    fn plan(&self, k: u64) -> PhasePlan;
}

impl PlanSource for Keystream {
    fn plan(&self, k: u64) -> PhasePlan {
        Keystream::plan(self, k)
    }
}

/// Classical OFDM: `C_k ≡ 1`, no precoding.
pub struct IdentityPlans {
    pub n_carriers: usize,
}

impl PlanSource for IdentityPlans {
    fn plan(&self, k: u64) -> PhasePlan {
        PhasePlan::identity(k, self.n_carriers)
    }
}

/// Continuous uniform phases on `[0, 2π)`, reproducible per block from a seed.
pub struct ContinuousPlans {
    pub seed: u64,
    pub n_carriers: usize,
}

impl PlanSource for ContinuousPlans {
    fn plan(&self, k: u64) -> PhasePlan {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        let cp = rng.random::<f64>() * 2.0 * PI;
        PhasePlan {
            block_index: k,
            cp_phase: Complex64::from_polar(1.0, cp),
            subcarrier_phases: (0..self.n_carriers)
                .map(|_| rng.random::<f64>() * 2.0 * PI)
                .collect(),
        }
    }
}

/// Rotates only CP1, leaving subcarriers unprecoded (a jammer's private CP scrambling).
pub struct CpOnlyPlans {
    pub inner: Keystream,
}

impl PlanSource for CpOnlyPlans {
    fn plan(&self, k: u64) -> PhasePlan {
        let full = self.inner.plan(k);
        PhasePlan {
            cp_phase: full.cp_phase,
            subcarrier_phases: vec![0.0; full.subcarrier_phases.len()],
            block_index: k,
        }
    }
}

/// Everything a phase model may need to build its plan source.
#[derive(Clone, Debug)]
pub struct PlanContext {
    pub key: SecretKey,
    pub epoch: u32,
    pub order: u32,
    pub n_carriers: usize,
    pub seed: u64,
}

/// Precoding phase model, selectable by name.
pub trait PhaseModel: Named + Send + Sync {
    fn plans(&self, ctx: &PlanContext) -> Result<Box<dyn PlanSource>>;
    /// Whether the model applies any secret rotation at all.
    fn is_secure(&self) -> bool {
        true
    }
}

pub struct KeystreamModel;
pub struct ContinuousModel;
pub struct NoPrecoding;

impl Named for KeystreamModel {
    fn name(&self) -> &'static str {
        "keystream"
    }
}
impl PhaseModel for KeystreamModel {
    fn plans(&self, ctx: &PlanContext) -> Result<Box<dyn PlanSource>> {
        Ok(Box::new(Keystream::new(
            &ctx.key,
            ctx.epoch,
            ctx.order,
            ctx.n_carriers,
        )?))
    }
}

impl Named for ContinuousModel {
    fn name(&self) -> &'static str {
        "continuous"
    }
}
impl PhaseModel for ContinuousModel {
    fn plans(&self, ctx: &PlanContext) -> Result<Box<dyn PlanSource>> {
        Ok(Box::new(ContinuousPlans {
            seed: ctx.seed,
            n_carriers: ctx.n_carriers,
        }))
    }
}

impl Named for NoPrecoding {
    fn name(&self) -> &'static str {
        "off"
    }
}
impl PhaseModel for NoPrecoding {
    fn plans(&self, ctx: &PlanContext) -> Result<Box<dyn PlanSource>> {
        Ok(Box::new(IdentityPlans {
            n_carriers: ctx.n_carriers,
        }))
    }
    fn is_secure(&self) -> bool {
        false
    }
}

pub fn phase_models() -> Registry<dyn PhaseModel> {
    Registry::<dyn PhaseModel>::new("phase model")
        .with(Arc::new(KeystreamModel) as Arc<dyn PhaseModel>)
        .with(Arc::new(ContinuousModel))
        .with(Arc::new(NoPrecoding))
}

/// Outcome of one built-in keystream check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
}

/// AES known answers (FIPS-197 C.1 and C.3), plan determinism, and that
/// distinct blocks and epochs give distinct plans under `key`.
pub fn self_test(key: &SecretKey, order: u32, n_carriers: usize) -> Result<Vec<SelfCheck>> {
    let pt = [
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff,
    ];
    let kat = |k: &str, ct: &str| -> Result<bool> {
        Ok(hex::encode(BlockEncryptor::new(&SecretKey::from_hex(k)?).encrypt(pt)) == ct)
    };
    let a = Keystream::new(key, 0, order, n_carriers)?;
    let b = Keystream::new(key, 0, order, n_carriers)?;
    let other_epoch = Keystream::new(key, 1, order, n_carriers)?;
    let same = (0..64).all(|k| a.plan(k) == b.plan(k));
    let blocks_differ = a.plan(0).subcarrier_phases != a.plan(1).subcarrier_phases;
    let epochs_differ = a.plan(0).subcarrier_phases != other_epoch.plan(0).subcarrier_phases;
    Ok(vec![
        SelfCheck {
            name: "aes128 known answer",
            passed: kat("000102030405060708090a0b0c0d0e0f", "69c4e0d86a7b0430d8cdb78070b4c55a")?,
        },
        SelfCheck {
            name: "aes256 known answer",
            passed: kat(
                "000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f",
                "8ea2b7ca516745bfeafc49904b496089",
            )?,
        },
        SelfCheck {
            name: "plans deterministic",
            passed: same,
        },
        SelfCheck {
            name: "blocks differ",
            passed: blocks_differ,
        },
        SelfCheck {
            name: "epochs differ",
            passed: epochs_differ,
        },
    ])
}
