//! Two-stage synchronizer.
//!
//! The pre-FFT stage correlates each block's CP1 with the body tail it was
//! copied from and strips the secret CP phase with every candidate keystream
//! offset. Only the right `(τ, d)` pair adds coherently across blocks. The
//! post-FFT stage uses pilots to find the integer CFO, the residual timing
//! inside CP2 and the carrier phase.

mod post_fft;
mod pre_fft;

pub use post_fft::{
    compensate_cfo, demod_fft, estimate_fine_time, estimate_integer_cfo, estimate_phase,
    IntegerCfo,
};
pub use pre_fft::{corr_pre_fft, estimate_pre_fft, v_expected, CorrelationSurface, PreFftEstimate};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, input_err, Result};
use crate::keystream::{PhasePlan, PlanSource};
use crate::txchain::{ComplexSignal, OfdmConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncConfig {
    /// Blocks averaged, `K`.
    pub k_blocks: usize,
    /// First candidate keystream offset.
    #[serde(default)]
    pub candidate_start: i64,
    /// `|𝒦|`.
    pub n_candidates: usize,
    /// Keystream index of the first block the receiver looks at, before the
    /// unknown offset `d` is added.
    #[serde(default = "default_base")]
    pub keystream_base: u64,
    /// Sample offsets searched; all of `[0, L)` when absent.
    #[serde(default)]
    pub tau_grid: Option<Vec<usize>>,
    pub n_lower: i64,
    pub n_upper: i64,
    /// Carrier distance between the two pilots of each fine-timing pair.
    #[serde(default = "default_spacing")]
    pub pair_spacing: usize,
    /// Samples the FFT window is advanced into the prefix; `cp2/2` when absent.
    #[serde(default)]
    pub window_margin: Option<usize>,
    /// Surfaces whose max/mean falls below this are flagged.
    #[serde(default = "default_ratio")]
    pub min_peak_ratio: f64,
}

fn default_base() -> u64 {
    1000
}
fn default_spacing() -> usize {
    16
}
fn default_ratio() -> f64 {
    1.5
}

impl SyncConfig {
    /// `|𝒦| = 50`, CFO search `[-4, 3]`.
    pub fn table1(k_blocks: usize) -> Self {
        Self {
            k_blocks,
            candidate_start: 0,
            n_candidates: 50,
            keystream_base: default_base(),
            tau_grid: None,
            n_lower: -4,
            n_upper: 3,
            pair_spacing: default_spacing(),
            window_margin: None,
            min_peak_ratio: default_ratio(),
        }
    }

    pub fn validate(&self, ofdm: &OfdmConfig) -> Result<()> {
        if self.k_blocks == 0 {
            return config_err("K must be at least 1");
        }
        if self.n_candidates == 0 {
            return config_err("candidate set is empty");
        }
        if self.n_lower > self.n_upper {
            return config_err(format!(
                "CFO search bounds reversed: N_l = {} > N_u = {}",
                self.n_lower, self.n_upper
            ));
        }
        if (self.keystream_base as i64) + self.candidate_start < 0 {
            return config_err("candidate offsets reach below keystream index 0");
        }
        if let Some(grid) = &self.tau_grid {
            if grid.is_empty() || grid.iter().any(|&t| t >= ofdm.block_samples()) {
                return config_err("tau grid must be nonempty and inside [0, L)");
            }
        }
        if self.margin(ofdm) >= ofdm.cp_samples() {
            return config_err("window margin must be shorter than the prefix");
        }
        Ok(())
    }

    pub fn candidates(&self) -> impl Iterator<Item = i64> + Clone {
        self.candidate_start..self.candidate_start + self.n_candidates as i64
    }

    pub fn taus(&self, ofdm: &OfdmConfig) -> Vec<usize> {
        self.tau_grid
            .clone()
            .unwrap_or_else(|| (0..ofdm.block_samples()).collect())
    }

    /// `N_c' = N_c + N_u - N_l`.
    pub fn n_prime(&self, ofdm: &OfdmConfig) -> usize {
        (ofdm.n_carriers as i64 + self.n_upper - self.n_lower) as usize
    }

    pub fn margin(&self, ofdm: &OfdmConfig) -> usize {
        self.window_margin.unwrap_or(ofdm.cp2_samples / 2)
    }

    /// Fine-timing pilot pairs `(i_p1, i_p2)` with `i_p2 = i_p1 + spacing`.
    pub fn pilot_pairs(&self, ofdm: &OfdmConfig) -> Result<Vec<(usize, usize)>> {
        let s = self.pair_spacing;
        if s == 0 || s * ofdm.cp2_samples > ofdm.n_carriers {
            return config_err(format!(
                "pilot spacing {s} with CP2 of {} samples is ambiguous",
                ofdm.cp2_samples
            ));
        }
        let pairs: Vec<_> = ofdm
            .pilot_positions
            .iter()
            .filter(|&&i| ofdm.is_pilot(i + s))
            .map(|&i| (i, i + s))
            .collect();
        if pairs.is_empty() {
            return config_err(format!("no pilot pairs {s} carriers apart"));
        }
        Ok(pairs)
    }
}

/// Output of the full two-stage synchronizer.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncEstimate {
    /// Seconds in `[0, T_b)`.
    pub t0_hat: f64,
    pub k0_hat: i64,
    /// Fractional part of `ω0 T_s / 2π`, in `[0, 1)`.
    pub frac_cfo_hat: f64,
    pub n0_hat: i64,
    pub zeta0_hat: f64,
    /// Seconds in `[0, T_CP,2)`.
    pub t0p_hat: f64,
    pub phi0_hat: f64,
    pub peak_metric: f64,
    /// Coarse timing from the pre-FFT stage, seconds.
    pub coarse_t0: f64,
    pub low_confidence: bool,
}

impl SyncEstimate {
    /// Total normalized CFO estimate `frac + n0 + ζ0`.
    pub fn cfo_hat(&self) -> f64 {
        self.frac_cfo_hat + self.n0_hat as f64 + self.zeta0_hat
    }
}

/// Plans for a contiguous run of keystream indices.
pub(crate) struct PlanWindow {
    first: i64,
    plans: Vec<PhasePlan>,
}

impl PlanWindow {
    pub(crate) fn new(source: &dyn PlanSource, first: i64, count: usize) -> Self {
        let plans = (0..count as i64).map(|i| source.plan((first + i) as u64)).collect();
        Self { first, plans }
    }

    pub(crate) fn get(&self, index: i64) -> &PhasePlan {
        &self.plans[(index - self.first) as usize]
    }
}

/// Starting sample of the FFT window for block `k` given a coarse timing.
fn window_start(coarse: usize, k: usize, ofdm: &OfdmConfig, margin: usize) -> usize {
    coarse + k * ofdm.block_samples() + ofdm.cp_samples() - margin
}

fn demod_blocks(
    r: &[Complex64],
    coarse: usize,
    k_blocks: usize,
    ofdm: &OfdmConfig,
    margin: usize,
    n_out: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let n = ofdm.n_carriers;
    (0..k_blocks)
        .map(|k| {
            let s = window_start(coarse, k, ofdm, margin);
            if s + n > r.len() {
                return input_err(format!("block {k} window ends past the record"));
            }
            Ok(demod_fft(&r[s..s + n], n_out))
        })
        .collect()
}

/// Runs both stages on `r`. The receiver sees block `k` of its window as
/// keystream index `base + d + k` for the unknown offset `d`.
pub fn synchronize(
    r: &ComplexSignal,
    cfg: &SyncConfig,
    ofdm: &OfdmConfig,
    plans: &dyn PlanSource,
) -> Result<SyncEstimate> {
    cfg.validate(ofdm)?;
    if cfg.k_blocks < 2 {
        return config_err("the post-FFT stage needs K >= 2");
    }
    let pairs = cfg.pilot_pairs(ofdm)?;
    let pre = estimate_pre_fft(r, cfg, ofdm, plans)?;
    let n = ofdm.n_carriers;
    let l = ofdm.block_samples();
    let margin = cfg.margin(ofdm);
    let first = cfg.keystream_base as i64 + pre.k0_hat;
    let window = PlanWindow::new(plans, first, cfg.k_blocks);
    let block_plans: Vec<PhasePlan> = (0..cfg.k_blocks as i64).map(|k| window.get(first + k).clone()).collect();
    let pilots: Vec<(usize, Complex64)> = ofdm
        .pilot_positions
        .iter()
        .map(|&i| (i, ofdm.pilot_value))
        .collect();

    let r1 = compensate_cfo(&r.samples, pre.frac_cfo, n);
    let wide = demod_blocks(&r1, pre.t0_samples, cfg.k_blocks, ofdm, margin, cfg.n_prime(ofdm))?;
    let icfo = estimate_integer_cfo(&wide, &block_plans, &pilots, cfg.n_lower, cfg.n_upper, n, l);

    let eps = pre.frac_cfo + icfo.n0 as f64 + icfo.zeta0;
    let r2 = compensate_cfo(&r.samples, eps, n);
    let std = demod_blocks(&r2, pre.t0_samples, cfg.k_blocks, ofdm, margin, n)?;
    let pilot_pairs: Vec<_> = pairs
        .iter()
        .map(|&(a, b)| ((a, ofdm.pilot_value), (b, ofdm.pilot_value)))
        .collect();
    let t0p = estimate_fine_time(&std, &block_plans, &pilot_pairs, n, ofdm.cp2_samples)?;
    let phi = estimate_phase(&std, &block_plans, &pilots, t0p, n);

    let t0 = (pre.t0_samples as f64 - margin as f64 + t0p).rem_euclid(l as f64);
    let dt = ofdm.sample_interval;
    Ok(SyncEstimate {
        t0_hat: t0 * dt,
        k0_hat: pre.k0_hat,
        frac_cfo_hat: pre.frac_cfo,
        n0_hat: icfo.n0,
        zeta0_hat: icfo.zeta0,
        t0p_hat: t0p * dt,
        phi0_hat: phi,
        peak_metric: pre.peak,
        coarse_t0: pre.t0_samples as f64 * dt,
        low_confidence: pre.low_confidence || icfo.low_confidence,
    })
}

/// Sliding-window tracking: re-runs the synchronizer over successive
/// `K`-block windows advanced by `step` blocks.
pub fn track(
    r: &ComplexSignal,
    cfg: &SyncConfig,
    ofdm: &OfdmConfig,
    plans: &dyn PlanSource,
    step: usize,
) -> Result<Vec<SyncEstimate>> {
    if step == 0 {
        return config_err("tracking step must be positive");
    }
    let l = ofdm.block_samples();
    let need = (cfg.k_blocks + 1) * l;
    let mut out = Vec::new();
    let mut w = 0;
    while w * l + need <= r.len() {
        let slice = ComplexSignal {
            samples: r.samples[w * l..].to_vec(),
            sample_interval: r.sample_interval,
            start_time: r.time_of(w * l),
        };
        let shifted = SyncConfig {
            keystream_base: cfg.keystream_base + w as u64,
            ..cfg.clone()
        };
        out.push(synchronize(&slice, &shifted, ofdm, plans)?);
        w += step;
    }
    Ok(out)
}

/// Circular distance between two timings on a period.
pub fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

#[cfg(test)]
mod tests;
