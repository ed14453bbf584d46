use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::report::{ExperimentReport, SurfaceRow};
use super::sync_exp::{draw_trial, plan_source, received_record};
use super::{trial_rng, Scenario, TrialDraw};
use crate::error::Result;
use crate::sync::{estimate_pre_fft, CorrelationSurface, SyncConfig};

/// Averaged correlation surface of one trial and the magnitudes at the
/// legitimate and jammer timings on the true keystream offset.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceTrial {
    pub draw: TrialDraw,
    pub surface: CorrelationSurface,
    pub legit_peak: f64,
    pub jammer_peak: f64,
}

/// Per-trial peak record, one row of peaks.csv.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakRow {
    pub trial: u64,
    pub t0: usize,
    pub k0: i64,
    pub jam_t0: usize,
    pub legit_peak: f64,
    pub jammer_peak: f64,
    /// Largest magnitude anywhere on the surface.
    pub surface_max: f64,
}

/// Runs one trial of `scenario` with the given phase model and `K` and
/// returns its pre-FFT surface.
pub fn surface_trial(scenario: &Scenario, model: &str, k_blocks: usize, trial: u64) -> Result<SurfaceTrial> {
    let mut rng = trial_rng(scenario.master_seed, trial);
    let draw = draw_trial(scenario, &mut rng);
    let plans = plan_source(scenario, model, scenario.master_seed)?;
    let r = received_record(scenario, plans.as_ref(), &draw, k_blocks + 1, &mut rng)?;
    let cfg = SyncConfig {
        k_blocks,
        ..scenario.sync.clone()
    };
    let pre = estimate_pre_fft(&r, &cfg, &scenario.ofdm, plans.as_ref())?;
    let s = pre.surface;
    let ti = |t: usize| s.taus.iter().position(|&x| x == t);
    let di = s.candidates.iter().position(|&d| d == draw.k0).unwrap_or(0);
    let at = |t: usize| ti(t).map_or(f64::NAN, |i| s.at(i, di).norm());
    Ok(SurfaceTrial {
        legit_peak: at(draw.t0),
        jammer_peak: at(draw.jam_t0),
        draw,
        surface: s,
    })
}

fn rows_of(s: &CorrelationSurface, collapse: bool) -> Vec<SurfaceRow> {
    if collapse {
        // C_k ≡ 1 makes every d identical
        return s
            .taus
            .iter()
            .enumerate()
            .map(|(i, &tau)| {
                let z = s.at(i, 0);
                SurfaceRow {
                    tau,
                    d: None,
                    re: z.re,
                    im: z.im,
                    magnitude: z.norm(),
                }
            })
            .collect();
    }
    let mut rows = Vec::with_capacity(s.values.len());
    for (i, &tau) in s.taus.iter().enumerate() {
        for (j, &d) in s.candidates.iter().enumerate() {
            let z = s.at(i, j);
            rows.push(SurfaceRow {
                tau,
                d: Some(d),
                re: z.re,
                im: z.im,
                magnitude: z.norm(),
            });
        }
    }
    rows
}

/// Correlation surfaces over `scenario.trials` trials at `K = sync.k_blocks`.
/// surface.csv holds trial 0; peaks.csv has every trial.
pub fn correlation_surface(scenario: &Scenario, precoding: bool) -> Result<ExperimentReport> {
    scenario.validate()?;
    let start = Instant::now();
    let model = if precoding { scenario.precoding.as_str() } else { "off" };
    let k = scenario.sync.k_blocks;
    let trials: Vec<Result<SurfaceTrial>> = (0..scenario.trials as u64)
        .into_par_iter()
        .map(|t| surface_trial(scenario, model, k, t))
        .collect();
    let mut peaks = Vec::with_capacity(trials.len());
    let mut first = None;
    for (t, tr) in trials.into_iter().enumerate() {
        let tr = tr?;
        peaks.push(PeakRow {
            trial: t as u64,
            t0: tr.draw.t0,
            k0: tr.draw.k0,
            jam_t0: tr.draw.jam_t0,
            legit_peak: tr.legit_peak,
            jammer_peak: tr.jammer_peak,
            surface_max: tr.surface.argmax().2,
        });
        if first.is_none() {
            first = Some(tr.surface);
        }
    }
    let mut report = ExperimentReport::new("surface", scenario);
    let n = peaks.len() as f64;
    let lp = peaks.iter().map(|p| p.legit_peak).sum::<f64>() / n;
    let jp = peaks.iter().map(|p| p.jammer_peak).sum::<f64>() / n;
    report.notes.push(format!("phase model: {model}, K = {k}"));
    report.notes.push(format!("mean legitimate peak {lp:.6e}"));
    report.notes.push(format!("mean jammer peak {jp:.6e}"));
    report.notes.push(format!("jammer/legitimate ratio {:.4}", jp / lp));
    if let Some(s) = first {
        report.surface = rows_of(&s, !precoding);
    }
    report.peaks = peaks;
    report.elapsed = Some(start.elapsed());
    Ok(report)
}
