use num_complex::Complex64;
use rayon::prelude::*;

use super::{PlanWindow, SyncConfig};
use crate::error::{input_err, Result};
use crate::keystream::PlanSource;
use crate::txchain::{ComplexSignal, OfdmConfig};

/// Averaged correlation over the `(τ, d)` grid, row-major in `τ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSurface {
    pub taus: Vec<usize>,
    pub candidates: Vec<i64>,
    pub values: Vec<Complex64>,
}

impl CorrelationSurface {
    pub fn at(&self, tau_index: usize, d_index: usize) -> Complex64 {
        self.values[tau_index * self.candidates.len() + d_index]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Largest magnitude over `d` for each `τ`.
    pub fn collapsed(&self) -> Vec<f64> {
        self.values
            .chunks(self.candidates.len())
            .map(|row| row.iter().map(|z| z.norm()).fold(0.0, f64::max))
            .collect()
    }

    /// `(τ index, d index, |value|)` of the maximum; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let nd = self.candidates.len();
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, z) in self.values.iter().enumerate() {
            let m = z.norm();
            if m > best.2 {
                best = (i / nd, i % nd, m);
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreFftEstimate {
    pub t0_samples: usize,
    pub k0_hat: i64,
    pub frac_cfo: f64,
    pub peak: f64,
    pub low_confidence: bool,
    pub surface: CorrelationSurface,
}

/// Triangle `v(τ)` with half-width `cp1` (same unit as `tau`).
pub fn v_expected(tau: f64, cp1: f64) -> f64 {
    if tau.abs() >= cp1 {
        0.0
    } else {
        cp1 - tau.abs()
    }
}

/// `Δt Σ r[n] r*[n+N]` over the CP1 span of block `k` at offset `tau`.
fn lag_product(r: &[Complex64], start: usize, ofdm: &OfdmConfig) -> Option<Complex64> {
    let n = ofdm.n_carriers;
    if start + ofdm.cp1_samples + n > r.len() {
        return None;
    }
    let s: Complex64 = (start..start + ofdm.cp1_samples)
        .map(|m| r[m] * r[m + n].conj())
        .sum();
    Some(s * ofdm.sample_interval)
}

/// `Y_k(τ, d)`; `None` when the window leaves the record.
pub fn corr_pre_fft(
    r: &ComplexSignal,
    k: usize,
    tau: usize,
    d: i64,
    plans: &dyn PlanSource,
    cfg: &SyncConfig,
    ofdm: &OfdmConfig,
) -> Option<Complex64> {
    let idx = cfg.keystream_base as i64 + k as i64 + d;
    if idx < 0 {
        return None;
    }
    let start = tau + k * ofdm.block_samples();
    lag_product(&r.samples, start, ofdm).map(|y| y * plans.plan(idx as u64).cp_phase.conj())
}

/// Searches `(τ, d)` for the largest `|(1/K) Σ_k Y_k(τ, d)|`.
pub fn estimate_pre_fft(
    r: &ComplexSignal,
    cfg: &SyncConfig,
    ofdm: &OfdmConfig,
    plans: &dyn PlanSource,
) -> Result<PreFftEstimate> {
    cfg.validate(ofdm)?;
    let l = ofdm.block_samples();
    let kb = cfg.k_blocks;
    if r.len() < (kb + 1) * l {
        return input_err(format!(
            "record of {} samples is shorter than K+1 = {} blocks",
            r.len(),
            kb + 1
        ));
    }
    let taus = cfg.taus(ofdm);
    let candidates: Vec<i64> = cfg.candidates().collect();
    let first = cfg.keystream_base as i64 + cfg.candidate_start;
    let window = PlanWindow::new(plans, first, kb + cfg.n_candidates);
    let cconj: Vec<Complex64> = (0..kb + cfg.n_candidates)
        .map(|i| window.get(first + i as i64).cp_phase.conj())
        .collect();
    let scale = 1.0 / kb as f64;

    let rows: Vec<Vec<Complex64>> = taus
        .par_iter()
        .map(|&tau| {
            let y: Vec<Complex64> = (0..kb)
                .map(|k| lag_product(&r.samples, tau + k * l, ofdm).expect("record length checked"))
                .collect();
            (0..cfg.n_candidates)
                .map(|di| {
                    let s: Complex64 = y.iter().enumerate().map(|(k, yk)| yk * cconj[k + di]).sum();
                    s * scale
                })
                .collect()
        })
        .collect();
    let surface = CorrelationSurface {
        taus,
        candidates,
        values: rows.into_iter().flatten().collect(),
    };
    let (ti, di, peak) = surface.argmax();
    let mean = surface.values.iter().map(|z| z.norm()).sum::<f64>() / surface.values.len() as f64;
    let low_confidence = !(peak > cfg.min_peak_ratio * mean);
    let phase = surface.at(ti, di).arg();
    let frac_cfo = (-phase / (2.0 * std::f64::consts::PI)).rem_euclid(1.0);
    Ok(PreFftEstimate {
        t0_samples: surface.taus[ti],
        k0_hat: surface.candidates[di],
        frac_cfo: if frac_cfo >= 1.0 { 0.0 } else { frac_cfo },
        peak,
        low_confidence,
        surface,
    })
}
