//! SP-OFDM transmitter: secure precoding, IDFT body synthesis and the
//! two-part cyclic prefix whose first part is rotated by the secret `C_k`.
//!
//! Block layout in samples: `[CP1 | CP2 | body]`. CP2 is a verbatim copy of
//! the last `cp2` body samples; CP1 copies the `cp1` body samples just before
//! that region and multiplies them by `C_k`. The body is the inverse DFT of
//! the precoded vector scaled by `1/N_c`, so per-sample power is `P_S/N_c`.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dsp;
use crate::error::{config_err, input_err, Error, Result};
use crate::keystream::{Keystream, PhasePlan, PlanSource, SecretKey};

/// Data symbol alphabet `Φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Bpsk,
    /// Gray-mapped QPSK with unit average power.
    Qpsk,
    Qam16,
    Custom(Vec<[f64; 2]>),
}

impl Constellation {
    pub fn points(&self) -> Vec<Complex64> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Constellation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Constellation::Qpsk => vec![
                Complex64::new(h, h),
                Complex64::new(h, -h),
                Complex64::new(-h, h),
                Complex64::new(-h, -h),
            ],
            Constellation::Qam16 => {
                let s = 1.0 / 10f64.sqrt();
                let levels = [-3.0, -1.0, 1.0, 3.0];
                levels
                    .iter()
                    .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re * s, im * s)))
                    .collect()
            }
            Constellation::Custom(p) => p.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
        }
    }

    /// Average symbol power `P_S` under uniform use of the points.
    pub fn power(&self) -> f64 {
        let pts = self.points();
        pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / pts.len() as f64
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let pts = self.points();
        pts[rng.random_range(0..pts.len())]
    }
}

/// Static system parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmConfig {
    pub n_carriers: usize,
    pub n_body_samples: usize,
    pub cp1_samples: usize,
    pub cp2_samples: usize,
    pub psk_order: u32,
    pub constellation: Constellation,
    #[serde(default)]
    pub pilot_positions: Vec<usize>,
    #[serde(default = "default_pilot")]
    pub pilot_value: Complex64,
    /// `T_s / N_c` in seconds.
    pub sample_interval: f64,
}

fn default_pilot() -> Complex64 {
    Complex64::new(1.0, 0.0)
}

impl OfdmConfig {
    /// N_c = 128, T_CP1 = T_s/8, T_CP2 = T_s/16, M = 16, QPSK data with
    /// 16 unit pilots spaced eight carriers apart.
    pub fn table1() -> Self {
        Self {
            n_carriers: 128,
            n_body_samples: 128,
            cp1_samples: 16,
            cp2_samples: 8,
            psk_order: 16,
            constellation: Constellation::Qpsk,
            pilot_positions: (0..16).map(|m| 4 + 8 * m).collect(),
            pilot_value: default_pilot(),
            sample_interval: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_carriers == 0 {
            return config_err("n_carriers must be positive");
        }
        if self.n_body_samples != self.n_carriers {
            return config_err(format!(
                "n_body_samples ({}) must equal n_carriers ({}) at critical sampling",
                self.n_body_samples, self.n_carriers
            ));
        }
        if self.cp1_samples == 0 || self.cp2_samples == 0 {
            return config_err("cp1_samples and cp2_samples must be positive");
        }
        if self.cp1_samples + self.cp2_samples > self.n_body_samples {
            return config_err("cyclic prefix longer than the block body");
        }
        crate::keystream::bits_per_symbol(self.psk_order)?;
        let pts = self.constellation.points();
        if pts.is_empty() {
            return config_err("constellation is empty");
        }
        if !pts.iter().all(|p| p.re.is_finite() && p.im.is_finite()) {
            return config_err("constellation has non-finite points");
        }
        if let Some(&p) = self.pilot_positions.iter().find(|&&p| p >= self.n_carriers) {
            return config_err(format!("pilot index {p} outside [0, {})", self.n_carriers));
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return config_err("sample_interval must be positive");
        }
        Ok(())
    }

    pub fn cp_samples(&self) -> usize {
        self.cp1_samples + self.cp2_samples
    }

    /// Samples per block, `(T_CP + T_s) / Δt`.
    pub fn block_samples(&self) -> usize {
        self.cp_samples() + self.n_body_samples
    }

    /// Body duration `T_s`.
    pub fn body_duration(&self) -> f64 {
        self.n_body_samples as f64 * self.sample_interval
    }

    /// Block duration `T_b = T_CP + T_s`.
    pub fn block_duration(&self) -> f64 {
        self.block_samples() as f64 * self.sample_interval
    }

    pub fn cp1_duration(&self) -> f64 {
        self.cp1_samples as f64 * self.sample_interval
    }

    pub fn cp2_duration(&self) -> f64 {
        self.cp2_samples as f64 * self.sample_interval
    }

    /// `P_S`, the average power of the data constellation.
    pub fn symbol_power(&self) -> f64 {
        self.constellation.power()
    }

    /// Nominal per-sample power of the transmitted waveform, `P_S / N_c`.
    pub fn sample_power(&self) -> f64 {
        self.symbol_power() / self.n_carriers as f64
    }

    pub fn is_pilot(&self, i: usize) -> bool {
        self.pilot_positions.contains(&i)
    }

    pub fn data_positions(&self) -> Vec<usize> {
        let mut mask = vec![true; self.n_carriers];
        for &p in &self.pilot_positions {
            mask[p] = false;
        }
        (0..self.n_carriers).filter(|&i| mask[i]).collect()
    }

    /// Short stable hash of the configuration for report provenance.
    pub fn config_hash(&self) -> String {
        stable_hash(&toml::to_string(self).expect("config serializes"))
    }
}

pub(crate) fn stable_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

/// One block of symbols `S_k`; pilot positions carry pilot values.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolBlock {
    pub block_index: u64,
    pub symbols: Vec<Complex64>,
}

impl SymbolBlock {
    /// I.i.d. uniform data from `Φ` with pilots inserted.
    pub fn random<R: Rng + ?Sized>(config: &OfdmConfig, block_index: u64, rng: &mut R) -> Self {
        let symbols = (0..config.n_carriers)
            .map(|i| {
                if config.is_pilot(i) {
                    config.pilot_value
                } else {
                    config.constellation.random_point(rng)
                }
            })
            .collect();
        Self {
            block_index,
            symbols,
        }
    }

    /// Places `data` on the non-pilot carriers in ascending order.
    pub fn from_data(config: &OfdmConfig, block_index: u64, data: &[Complex64]) -> Result<Self> {
        let positions = config.data_positions();
        if data.len() != positions.len() {
            return input_err(format!(
                "expected {} data symbols, got {}",
                positions.len(),
                data.len()
            ));
        }
        let mut symbols = vec![config.pilot_value; config.n_carriers];
        for (&p, &d) in positions.iter().zip(data) {
            symbols[p] = d;
        }
        Ok(Self {
            block_index,
            symbols,
        })
    }
}

/// Uniformly sampled complex baseband signal.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal {
    pub samples: Vec<Complex64>,
    pub sample_interval: f64,
    pub start_time: f64,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, sample_interval: f64) -> Self {
        assert!(sample_interval > 0.0, "sample interval must be positive");
        Self {
            samples,
            sample_interval,
            start_time: 0.0,
        }
    }

    pub fn zeros(len: usize, sample_interval: f64) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_interval)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_of(&self, n: usize) -> f64 {
        self.start_time + n as f64 * self.sample_interval
    }

    pub fn mean_power(&self) -> f64 {
        dsp::mean_power(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        dsp::energy(&self.samples)
    }

    pub fn scaled(mut self, gain: f64) -> Self {
        self.samples.iter_mut().for_each(|z| *z *= gain);
        self
    }

    /// Writes interleaved little-endian f64 I/Q to `path` and a text header
    /// next to it (`<path>.hdr`).
    pub fn write_iq(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.samples.len() * 16);
        for z in &self.samples {
            bytes.extend_from_slice(&z.re.to_le_bytes());
            bytes.extend_from_slice(&z.im.to_le_bytes());
        }
        fs::write(path, bytes)?;
        let mut hdr = fs::File::create(header_path(path))?;
        writeln!(hdr, "format = f64le interleaved I/Q")?;
        writeln!(hdr, "samples = {}", self.samples.len())?;
        writeln!(hdr, "sample_interval = {:e}", self.sample_interval)?;
        writeln!(hdr, "start_time = {:e}", self.start_time)?;
        writeln!(hdr, "config_hash = {config_hash}")?;
        Ok(())
    }

    /// Reads a file written by [`ComplexSignal::write_iq`]; returns the config hash too.
    pub fn read_iq(path: &Path) -> Result<(Self, String)> {
        let bytes = fs::read(path)?;
        if bytes.len() % 16 != 0 {
            return input_err("I/Q file length is not a multiple of 16 bytes");
        }
        let samples = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        let hdr_name = header_path(path);
        let hdr = fs::read_to_string(&hdr_name)?;
        let mut sample_interval = None;
        let mut start_time = 0.0;
        let mut hash = String::new();
        for (lineno, line) in hdr.lines().enumerate() {
            let Some((k, v)) = line.split_once('=') else {
                continue;
            };
            let bad = |_| Error::Parse {
                source_name: hdr_name.display().to_string(),
                message: format!("line {}: bad number '{}'", lineno + 1, v.trim()),
            };
            match k.trim() {
                "sample_interval" => sample_interval = Some(v.trim().parse::<f64>().map_err(bad)?),
                "start_time" => start_time = v.trim().parse::<f64>().map_err(bad)?,
                "config_hash" => hash = v.trim().to_string(),
                _ => {}
            }
        }
        let sample_interval = sample_interval.ok_or_else(|| Error::Parse {
            source_name: hdr_name.display().to_string(),
            message: "missing field 'sample_interval'".into(),
        })?;
        Ok((
            Self {
                samples,
                sample_interval,
                start_time,
            },
            hash,
        ))
    }
}

fn header_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".hdr");
    name.into()
}

/// `S̃_{k,i} = S_{k,i} e^{-jΘ_{k,i}}`.
pub fn precode(block: &SymbolBlock, plan: &PhasePlan) -> Result<Vec<Complex64>> {
    if block.symbols.len() != plan.len() {
        return input_err(format!(
            "plan has {} phases for a block of {} symbols",
            plan.len(),
            block.symbols.len()
        ));
    }
    Ok(block
        .symbols
        .iter()
        .zip(&plan.subcarrier_phases)
        .map(|(s, &theta)| s * Complex64::from_polar(1.0, -theta))
        .collect())
}

/// Emits one `[CP1 | CP2 | body]` block for an already precoded vector.
pub fn modulate_block(
    precoded: &[Complex64],
    cp_phase: Complex64,
    config: &OfdmConfig,
) -> Result<ComplexSignal> {
    let n = config.n_carriers;
    if precoded.len() != n {
        return input_err(format!("expected {n} precoded symbols, got {}", precoded.len()));
    }
    let mut body = precoded.to_vec();
    dsp::idft(&mut body);
    let scale = 1.0 / n as f64;
    body.iter_mut().for_each(|z| *z *= scale);

    let (cp1, cp2) = (config.cp1_samples, config.cp2_samples);
    let mut out = Vec::with_capacity(config.block_samples());
    out.extend(body[n - cp2 - cp1..n - cp2].iter().map(|z| z * cp_phase));
    out.extend_from_slice(&body[n - cp2..]);
    out.extend_from_slice(&body);
    Ok(ComplexSignal::new(out, config.sample_interval))
}

/// Concatenates the blocks, each precoded with the plan of its own index.
pub fn build_waveform_with(
    blocks: &[SymbolBlock],
    plans: &dyn PlanSource,
    config: &OfdmConfig,
) -> Result<ComplexSignal> {
    config.validate()?;
    for pair in blocks.windows(2) {
        if pair[1].block_index != pair[0].block_index + 1 {
            return input_err("blocks must be indexed consecutively");
        }
    }
    let mut samples = Vec::with_capacity(blocks.len() * config.block_samples());
    for block in blocks {
        let plan = plans.plan(block.block_index);
        let pre = precode(block, &plan)?;
        samples.extend(modulate_block(&pre, plan.cp_phase, config)?.samples);
    }
    Ok(ComplexSignal::new(samples, config.sample_interval))
}

pub fn build_waveform(
    blocks: &[SymbolBlock],
    key: &SecretKey,
    epoch: u32,
    config: &OfdmConfig,
) -> Result<ComplexSignal> {
    let ks = Keystream::new(key, epoch, config.psk_order, config.n_carriers)?;
    build_waveform_with(blocks, &ks, config)
}
