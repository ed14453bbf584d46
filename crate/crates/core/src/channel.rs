//! Propagation: time/frequency/phase offsets, multipath fading and AWGN.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::registry::{Named, Registry};
use crate::txchain::{ComplexSignal, OfdmConfig};

/// How a delay that falls between samples is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Round to the nearest sample.
    #[default]
    Grid,
    Linear,
}

/// Timing, carrier frequency and phase offset of one emitter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetSpec {
    /// Seconds, in `[0, T_b)`.
    pub t0: f64,
    /// Rad/s.
    pub omega0: f64,
    pub phi0: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl OffsetSpec {
    pub fn zero() -> Self {
        Self {
            t0: 0.0,
            omega0: 0.0,
            phi0: 0.0,
            interpolation: Interpolation::Grid,
        }
    }

    /// Offsets from a sample delay and a CFO normalized to the subcarrier spacing.
    pub fn from_normalized(config: &OfdmConfig, delay_samples: f64, cfo: f64, phi0: f64) -> Self {
        Self {
            t0: delay_samples * config.sample_interval,
            omega0: 2.0 * PI * cfo / config.body_duration(),
            phi0,
            interpolation: Interpolation::Grid,
        }
    }

    /// `ω0 T_s / 2π`.
    pub fn normalized_cfo(&self, config: &OfdmConfig) -> f64 {
        self.omega0 * config.body_duration() / (2.0 * PI)
    }

    pub fn validate(&self, block_duration: f64) -> Result<()> {
        if !(self.t0 >= 0.0 && self.t0 < block_duration) {
            return input_err(format!(
                "time offset {:e} s outside [0, {:e})",
                self.t0, block_duration
            ));
        }
        if !self.omega0.is_finite() || !self.phi0.is_finite() {
            return input_err("offsets must be finite");
        }
        Ok(())
    }
}

/// Value of `x` at fractional sample position `pos`; zero outside the record.
fn sample_at(x: &[Complex64], pos: f64) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    let i0 = pos.floor();
    let f = pos - i0;
    let get = |i: f64| {
        if i < 0.0 || i >= x.len() as f64 {
            zero
        } else {
            x[i as usize]
        }
    };
    if f == 0.0 {
        get(i0)
    } else {
        get(i0) * (1.0 - f) + get(i0 + 1.0) * f
    }
}

fn delayed(x: &[Complex64], delay_samples: f64) -> Vec<Complex64> {
    (0..x.len())
        .map(|n| sample_at(x, n as f64 - delay_samples))
        .collect()
}

/// `r(t) = s(t - t0) e^{j(ω0 t + φ0)}` over the input's time axis.
pub fn apply_offsets(
    signal: &ComplexSignal,
    spec: &OffsetSpec,
    block_duration: f64,
) -> Result<ComplexSignal> {
    spec.validate(block_duration)?;
    let dt = signal.sample_interval;
    let mut delay = spec.t0 / dt;
    if spec.interpolation == Interpolation::Grid {
        delay = delay.round();
    }
    let mut samples = delayed(&signal.samples, delay);
    for (n, z) in samples.iter_mut().enumerate() {
        let t = signal.time_of(n);
        *z *= Complex64::from_polar(1.0, spec.omega0 * t + spec.phi0);
    }
    Ok(ComplexSignal {
        samples,
        sample_interval: dt,
        start_time: signal.start_time,
    })
}

/// Receiver-side view of an emitter whose waveform `wave` was synthesized
/// `lead` samples early: output sample `i` is `wave` at `i + lead - t0/Δt`,
/// rotated by `e^{j(ω0 t_i + φ0)}`. Lets a record start mid-stream without a
/// leading gap.
pub fn place_with_offsets(
    wave: &ComplexSignal,
    lead: usize,
    n_samples: usize,
    spec: &OffsetSpec,
    block_duration: f64,
) -> Result<ComplexSignal> {
    spec.validate(block_duration)?;
    let dt = wave.sample_interval;
    let mut delay = spec.t0 / dt;
    if spec.interpolation == Interpolation::Grid {
        delay = delay.round();
    }
    let samples = (0..n_samples)
        .map(|i| {
            let rot = Complex64::from_polar(1.0, spec.omega0 * i as f64 * dt + spec.phi0);
            rot * sample_at(&wave.samples, i as f64 + lead as f64 - delay)
        })
        .collect();
    Ok(ComplexSignal::new(samples, dt))
}

/// One propagation path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay: f64,
    pub gain: Complex64,
    /// Rad/s.
    pub doppler: f64,
}

/// A realized channel: paths plus receiver noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingSpec {
    pub taps: Vec<Tap>,
    #[serde(default)]
    pub rician_k0: Option<f64>,
    #[serde(default)]
    pub noise_sigma2: f64,
    /// How fractional tap delays are realized.
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl FadingSpec {
    pub fn flat(noise_sigma2: f64) -> Self {
        Self {
            taps: vec![Tap {
                delay: 0.0,
                gain: Complex64::new(1.0, 0.0),
                doppler: 0.0,
            }],
            rician_k0: None,
            noise_sigma2,
            interpolation: Interpolation::Grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return config_err("fading spec needs at least one tap");
        }
        if self.taps.iter().any(|t| !(t.delay >= 0.0)) {
            return config_err("tap delays must be non-negative");
        }
        if !(self.noise_sigma2 >= 0.0) {
            return config_err("noise variance must be non-negative");
        }
        Ok(())
    }

    pub fn max_delay(&self) -> f64 {
        self.taps.iter().map(|t| t.delay).fold(0.0, f64::max)
    }

    pub fn total_power(&self) -> f64 {
        self.taps.iter().map(|t| t.gain.norm_sqr()).sum()
    }

    /// Logs a warning when the delay spread exceeds the shorter prefix part.
    pub fn check_delay_spread(&self, config: &OfdmConfig) -> bool {
        let bound = config.cp1_duration().min(config.cp2_duration());
        let ok = self.max_delay() < bound;
        if !ok {
            log::warn!(
                "delay spread {:e} s exceeds prefix bound {:e} s; expect ISI",
                self.max_delay(),
                bound
            );
        }
        ok
    }
}

/// `Σ_m g_m e^{j ν_m t} s(t - τ_m)`. Fractional delays are rounded to the
/// sample grid unless the spec asks for linear interpolation.
pub fn apply_fading(signal: &ComplexSignal, spec: &FadingSpec) -> Result<ComplexSignal> {
    spec.validate()?;
    let dt = signal.sample_interval;
    let mut out = vec![Complex64::new(0.0, 0.0); signal.len()];
    for tap in &spec.taps {
        let shift = match spec.interpolation {
            Interpolation::Grid => (tap.delay / dt).round(),
            Interpolation::Linear => tap.delay / dt,
        };
        let d = delayed(&signal.samples, shift);
        for (n, (o, v)) in out.iter_mut().zip(d).enumerate() {
            let rot = if tap.doppler == 0.0 {
                tap.gain
            } else {
                tap.gain * Complex64::from_polar(1.0, tap.doppler * signal.time_of(n))
            };
            *o += rot * v;
        }
    }
    Ok(ComplexSignal {
        samples: out,
        sample_interval: dt,
        start_time: signal.start_time,
    })
}

/// Circularly symmetric complex Gaussian sample of total variance `sigma2`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, sigma2: f64) -> Complex64 {
    let s = (sigma2 / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

pub fn add_awgn_with<R: Rng + ?Sized>(signal: &ComplexSignal, sigma2: f64, rng: &mut R) -> ComplexSignal {
    let mut out = signal.clone();
    if sigma2 > 0.0 {
        out.samples
            .iter_mut()
            .for_each(|z| *z += complex_gaussian(rng, sigma2));
    }
    out
}

pub fn add_awgn(signal: &ComplexSignal, sigma2: f64, rng_seed: u64) -> ComplexSignal {
    add_awgn_with(signal, sigma2, &mut ChaCha8Rng::seed_from_u64(rng_seed))
}

/// Per-sample noise variance giving `snr_db` against the nominal signal power.
pub fn sigma2_for_snr(config: &OfdmConfig, snr_db: f64) -> f64 {
    config.sample_power() / 10f64.powf(snr_db / 10.0)
}

/// Parameters from which a channel model draws one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    #[serde(default = "default_paths")]
    pub n_paths: usize,
    /// Largest path delay in samples.
    #[serde(default = "default_max_delay")]
    pub max_delay_samples: f64,
    /// Largest Doppler shift as a fraction of the subcarrier spacing.
    #[serde(default = "default_doppler")]
    pub max_doppler: f64,
    #[serde(default = "default_k0")]
    pub rician_k0_db: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

fn default_paths() -> usize {
    4
}
fn default_max_delay() -> f64 {
    1.5
}
fn default_doppler() -> f64 {
    0.02
}
fn default_k0() -> f64 {
    10.0
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            n_paths: default_paths(),
            max_delay_samples: default_max_delay(),
            max_doppler: default_doppler(),
            rician_k0_db: default_k0(),
            interpolation: Interpolation::Grid,
        }
    }
}

/// A named channel family that draws `FadingSpec` realizations.
pub trait ChannelModel: Named + Send + Sync {
    fn realize(
        &self,
        params: &ChannelParams,
        config: &OfdmConfig,
        noise_sigma2: f64,
        rng: &mut ChaCha8Rng,
    ) -> FadingSpec;
}

/// Equal-power paths with uniform phases, delays evenly spread up to the maximum.
fn scattered_taps(
    params: &ChannelParams,
    config: &OfdmConfig,
    total_power: f64,
    doppler: bool,
    rng: &mut ChaCha8Rng,
) -> Vec<Tap> {
    let n = params.n_paths.max(1);
    let amp = (total_power / n as f64).sqrt();
    let max_shift = 2.0 * PI * params.max_doppler / config.body_duration();
    (0..n)
        .map(|m| {
            let frac = if n == 1 { 0.0 } else { m as f64 / (n - 1) as f64 };
            let phase = rng.random::<f64>() * 2.0 * PI;
            let nu = if doppler {
                (2.0 * rng.random::<f64>() - 1.0) * max_shift
            } else {
                0.0
            };
            Tap {
                delay: frac * params.max_delay_samples * config.sample_interval,
                gain: Complex64::from_polar(amp, phase),
                doppler: nu,
            }
        })
        .collect()
}

pub struct Awgn;
pub struct StaticMultipath;
pub struct DopplerMultipath;
pub struct Rician;

impl Named for Awgn {
    fn name(&self) -> &'static str {
        "awgn"
    }
}
impl ChannelModel for Awgn {
    fn realize(&self, _: &ChannelParams, _: &OfdmConfig, s2: f64, _: &mut ChaCha8Rng) -> FadingSpec {
        FadingSpec::flat(s2)
    }
}

impl Named for StaticMultipath {
    fn name(&self) -> &'static str {
        "static_multipath"
    }
}
impl ChannelModel for StaticMultipath {
    fn realize(&self, p: &ChannelParams, c: &OfdmConfig, s2: f64, rng: &mut ChaCha8Rng) -> FadingSpec {
        FadingSpec {
            taps: scattered_taps(p, c, 1.0, false, rng),
            rician_k0: None,
            noise_sigma2: s2,
            interpolation: p.interpolation,
        }
    }
}

impl Named for DopplerMultipath {
    fn name(&self) -> &'static str {
        "doppler_multipath"
    }
}
impl ChannelModel for DopplerMultipath {
    fn realize(&self, p: &ChannelParams, c: &OfdmConfig, s2: f64, rng: &mut ChaCha8Rng) -> FadingSpec {
        FadingSpec {
            taps: scattered_taps(p, c, 1.0, true, rng),
            rician_k0: None,
            noise_sigma2: s2,
            interpolation: p.interpolation,
        }
    }
}

impl Named for Rician {
    fn name(&self) -> &'static str {
        "rician"
    }
}
impl ChannelModel for Rician {
    /// Unit direct path plus scattered paths of total power `1/K0`.
    fn realize(&self, p: &ChannelParams, c: &OfdmConfig, s2: f64, rng: &mut ChaCha8Rng) -> FadingSpec {
        let k0 = 10f64.powf(p.rician_k0_db / 10.0);
        let mut taps = vec![Tap {
            delay: 0.0,
            gain: Complex64::new(1.0, 0.0),
            doppler: 0.0,
        }];
        taps.extend(scattered_taps(p, c, 1.0 / k0, false, rng));
        FadingSpec {
            taps,
            rician_k0: Some(k0),
            noise_sigma2: s2,
            interpolation: p.interpolation,
        }
    }
}

pub fn channel_models() -> Registry<dyn ChannelModel> {
    Registry::<dyn ChannelModel>::new("channel model")
        .with(Arc::new(Awgn) as Arc<dyn ChannelModel>)
        .with(Arc::new(StaticMultipath))
        .with(Arc::new(DopplerMultipath))
        .with(Arc::new(Rician))
}
