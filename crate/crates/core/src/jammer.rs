//! Jamming strategies under an average power constraint.
//!
//! `power` is per-sample power `E|x|^2`. The legitimate waveform carries
//! `P_S / N_c` per sample, so equal-power disguised jamming (SJR 0 dB) uses
//! `power = config.sample_power()`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{add_awgn_with, complex_gaussian, place_with_offsets, OffsetSpec};
use crate::error::{config_err, Result};
use crate::keystream::{CpOnlyPlans, IdentityPlans, Keystream, PlanSource, SecretKey};
use crate::registry::{Named, Registry};
use crate::txchain::{build_waveform_with, ComplexSignal, OfdmConfig, SymbolBlock};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpPhaseMode {
    /// Classical prefix, `C_k = 1`.
    #[default]
    PlainCp,
    /// CP1 rotated by the jammer's own random PSK phases.
    RandomCp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerSpec {
    pub strategy: String,
    /// Per-sample power.
    pub power: f64,
    #[serde(default = "OffsetSpec::zero")]
    pub offsets: OffsetSpec,
    #[serde(default)]
    pub cp_phase_mode: CpPhaseMode,
}

impl JammerSpec {
    pub fn none() -> Self {
        Self {
            strategy: "none".into(),
            power: 0.0,
            offsets: OffsetSpec::zero(),
            cp_phase_mode: CpPhaseMode::PlainCp,
        }
    }

    /// Disguised OFDM jamming at `sjr_db` relative to the nominal signal power.
    pub fn disguised(config: &OfdmConfig, sjr_db: f64, offsets: OffsetSpec) -> Self {
        Self {
            strategy: "disguised_ofdm".into(),
            power: config.sample_power() / 10f64.powf(sjr_db / 10.0),
            offsets,
            cp_phase_mode: CpPhaseMode::PlainCp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return config_err(format!("jamming power {} must be finite and >= 0", self.power));
        }
        Ok(())
    }
}

pub trait JammerStrategy: Named + Send + Sync {
    fn generate(
        &self,
        spec: &JammerSpec,
        config: &OfdmConfig,
        n_samples: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<ComplexSignal>;
}

pub struct NoJamming;
pub struct GaussianJamming;
pub struct DisguisedOfdm;

impl Named for NoJamming {
    fn name(&self) -> &'static str {
        "none"
    }
}
impl JammerStrategy for NoJamming {
    fn generate(&self, _: &JammerSpec, c: &OfdmConfig, n: usize, _: &mut ChaCha8Rng) -> Result<ComplexSignal> {
        Ok(ComplexSignal::zeros(n, c.sample_interval))
    }
}

impl Named for GaussianJamming {
    fn name(&self) -> &'static str {
        "gaussian"
    }
}
impl JammerStrategy for GaussianJamming {
    fn generate(&self, s: &JammerSpec, c: &OfdmConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<ComplexSignal> {
        Ok(add_awgn_with(&ComplexSignal::zeros(n, c.sample_interval), s.power, rng))
    }
}

impl Named for DisguisedOfdm {
    fn name(&self) -> &'static str {
        "disguised_ofdm"
    }
}
impl JammerStrategy for DisguisedOfdm {
    /// Independent OFDM waveform in the legitimate format with its own
    /// offsets. One extra block is synthesized so the delayed waveform
    /// covers the whole record without a leading gap.
    fn generate(&self, s: &JammerSpec, c: &OfdmConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<ComplexSignal> {
        let len = c.block_samples();
        let n_blocks = n.div_ceil(len) + 2;
        let blocks: Vec<_> = (0..n_blocks as u64)
            .map(|k| SymbolBlock::random(c, k, rng))
            .collect();
        let plans: Box<dyn PlanSource> = match s.cp_phase_mode {
            CpPhaseMode::PlainCp => Box::new(IdentityPlans {
                n_carriers: c.n_carriers,
            }),
            CpPhaseMode::RandomCp => Box::new(CpOnlyPlans {
                inner: Keystream::new(&SecretKey::random(rng), 0, c.psk_order, c.n_carriers)?,
            }),
        };
        let wave = build_waveform_with(&blocks, plans.as_ref(), c)?;
        let gain = if c.sample_power() > 0.0 {
            (s.power / c.sample_power()).sqrt()
        } else {
            0.0
        };
        Ok(place_with_offsets(&wave, len, n, &s.offsets, c.block_duration())?.scaled(gain))
    }
}

pub fn jammer_strategies() -> Registry<dyn JammerStrategy> {
    Registry::<dyn JammerStrategy>::new("jammer strategy")
        .with(Arc::new(NoJamming) as Arc<dyn JammerStrategy>)
        .with(Arc::new(GaussianJamming))
        .with(Arc::new(DisguisedOfdm))
}

pub fn generate_jamming_with(
    spec: &JammerSpec,
    config: &OfdmConfig,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexSignal> {
    spec.validate()?;
    let strategy = jammer_strategies().get(&spec.strategy)?;
    strategy.generate(spec, config, n_samples, rng)
}

pub fn generate_jamming(
    spec: &JammerSpec,
    config: &OfdmConfig,
    n_samples: usize,
    rng_seed: u64,
) -> Result<ComplexSignal> {
    generate_jamming_with(spec, config, n_samples, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// `s + x + n`; the shorter of `s` and `x` is zero-padded.
pub fn combine_with(
    signal: &ComplexSignal,
    jam: &ComplexSignal,
    noise_sigma2: f64,
    rng: &mut ChaCha8Rng,
) -> ComplexSignal {
    let n = signal.len().max(jam.len());
    let zero = Complex64::new(0.0, 0.0);
    let mut samples: Vec<Complex64> = (0..n)
        .map(|i| {
            signal.samples.get(i).copied().unwrap_or(zero) + jam.samples.get(i).copied().unwrap_or(zero)
        })
        .collect();
    if noise_sigma2 > 0.0 {
        samples
            .iter_mut()
            .for_each(|z| *z += complex_gaussian(rng, noise_sigma2));
    }
    ComplexSignal {
        samples,
        sample_interval: signal.sample_interval,
        start_time: signal.start_time,
    }
}

pub fn combine(signal: &ComplexSignal, jam: &ComplexSignal, noise_sigma2: f64, rng_seed: u64) -> ComplexSignal {
    combine_with(signal, jam, noise_sigma2, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}
