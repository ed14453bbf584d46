use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::report::{CdfRow, ExperimentReport};
use super::{trial_rng, Scenario};
use crate::channel::{apply_fading, channel_models, place_with_offsets, sigma2_for_snr, OffsetSpec};
use crate::dsp::wrap_angle;
use crate::error::Result;
use crate::jammer::{combine_with, generate_jamming_with, JammerSpec};
use crate::keystream::{phase_models, PlanContext, PlanSource};
use crate::sync::{circular_distance, synchronize, SyncConfig};
use crate::txchain::{build_waveform_with, ComplexSignal, SymbolBlock};

/// Random quantities of one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialDraw {
    pub t0: usize,
    pub k0: i64,
    pub cfo: f64,
    pub phi: f64,
    pub jam_t0: usize,
    pub jam_cfo: f64,
}

/// One row of trials.csv.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyncTrial {
    pub trial: u64,
    pub k_blocks: usize,
    pub t0: usize,
    pub k0: i64,
    pub cfo: f64,
    pub phi: f64,
    pub jam_t0: usize,
    pub t0_hat: f64,
    pub k0_hat: i64,
    pub cfo_hat: f64,
    pub phi_hat: f64,
    /// Circular timing error normalized by `T_b`.
    pub time_error: f64,
    /// CFO error normalized by the subcarrier spacing.
    pub freq_error: f64,
    pub phase_error: f64,
    pub low_confidence: bool,
    pub error: String,
}

pub(crate) fn plan_source(scenario: &Scenario, model: &str, seed: u64) -> Result<Box<dyn PlanSource>> {
    let ctx = PlanContext {
        key: scenario.secret_key()?,
        epoch: scenario.epoch,
        order: scenario.ofdm.psk_order,
        n_carriers: scenario.ofdm.n_carriers,
        seed,
    };
    phase_models().get(model)?.plans(&ctx)
}

pub(crate) fn draw_trial(scenario: &Scenario, rng: &mut ChaCha8Rng) -> TrialDraw {
    let l = scenario.ofdm.block_samples();
    let t0 = rng.random_range(0..l);
    let k0 = scenario.sync.candidate_start + rng.random_range(0..scenario.sync.n_candidates) as i64;
    let m = scenario.offsets.max_cfo;
    let cfo = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
    let phi = if scenario.offsets.random_phase {
        rng.random_range(0.0..2.0 * PI)
    } else {
        0.0
    };
    let sep = scenario.jammer.min_separation as f64;
    let jam_t0 = loop {
        let t = rng.random_range(0..l);
        if circular_distance(t as f64, t0 as f64, l as f64) >= sep {
            break t;
        }
    };
    let jm = scenario.jammer.max_cfo;
    let jam_cfo = if jm > 0.0 { rng.random_range(-jm..=jm) } else { 0.0 };
    TrialDraw {
        t0,
        k0,
        cfo,
        phi,
        jam_t0,
        jam_cfo,
    }
}

/// Builds the received record for one trial: legitimate signal through the
/// channel plus jamming and noise. `n_blocks` blocks are covered.
pub(crate) fn received_record(
    scenario: &Scenario,
    plans: &dyn PlanSource,
    draw: &TrialDraw,
    n_blocks: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexSignal> {
    let ofdm = &scenario.ofdm;
    let l = ofdm.block_samples();
    let first = (scenario.sync.keystream_base as i64 + draw.k0) as u64;
    let blocks: Vec<_> = (first - 1..first + n_blocks as u64 + 1)
        .map(|k| SymbolBlock::random(ofdm, k, rng))
        .collect();
    let wave = build_waveform_with(&blocks, plans, ofdm)?;
    let offs = OffsetSpec::from_normalized(ofdm, draw.t0 as f64, draw.cfo, draw.phi);
    let n = n_blocks * l;
    let placed = place_with_offsets(&wave, l, n, &offs, ofdm.block_duration())?;
    let sigma2 = sigma2_for_snr(ofdm, scenario.snr_db);
    let model = channel_models().get(&scenario.channel.model)?;
    let fading = model.realize(&scenario.channel.params, ofdm, sigma2, rng);
    fading.check_delay_spread(ofdm);
    let faded = apply_fading(&placed, &fading)?;
    let jam_phase = rng.random_range(0.0..2.0 * PI);
    let mut jam_spec = JammerSpec::disguised(
        ofdm,
        scenario.jammer.sjr_db,
        OffsetSpec::from_normalized(ofdm, draw.jam_t0 as f64, draw.jam_cfo, jam_phase),
    );
    jam_spec.strategy = scenario.jammer.strategy.clone();
    jam_spec.cp_phase_mode = scenario.jammer.cp_phase_mode;
    let jam = generate_jamming_with(&jam_spec, ofdm, n, rng)?;
    Ok(combine_with(&faded, &jam, fading.noise_sigma2, rng))
}

fn failed(trial: u64, k: usize, d: &TrialDraw, msg: String) -> SyncTrial {
    SyncTrial {
        trial,
        k_blocks: k,
        t0: d.t0,
        k0: d.k0,
        cfo: d.cfo,
        phi: d.phi,
        jam_t0: d.jam_t0,
        t0_hat: f64::NAN,
        k0_hat: i64::MIN,
        cfo_hat: f64::NAN,
        phi_hat: f64::NAN,
        time_error: f64::INFINITY,
        freq_error: f64::INFINITY,
        phase_error: f64::INFINITY,
        low_confidence: true,
        error: msg,
    }
}

/// One trial evaluated at every `K` of the scenario.
pub fn run_sync_trial(scenario: &Scenario, trial: u64) -> Vec<SyncTrial> {
    let mut rng = trial_rng(scenario.master_seed, trial);
    let draw = draw_trial(scenario, &mut rng);
    let ks = scenario.k_values();
    let kmax = *ks.iter().max().expect("at least one K");
    let outcome = plan_source(scenario, &scenario.precoding, scenario.master_seed).and_then(|plans| {
        let r = received_record(scenario, plans.as_ref(), &draw, kmax + 1, &mut rng)?;
        Ok((plans, r))
    });
    let (plans, r) = match outcome {
        Ok(v) => v,
        Err(e) => return ks.iter().map(|&k| failed(trial, k, &draw, e.to_string())).collect(),
    };
    let ofdm = &scenario.ofdm;
    let l = ofdm.block_samples() as f64;
    ks.iter()
        .map(|&k| {
            let cfg = SyncConfig {
                k_blocks: k,
                ..scenario.sync.clone()
            };
            match synchronize(&r, &cfg, ofdm, plans.as_ref()) {
                Ok(est) => {
                    let t_hat = est.t0_hat / ofdm.sample_interval;
                    SyncTrial {
                        trial,
                        k_blocks: k,
                        t0: draw.t0,
                        k0: draw.k0,
                        cfo: draw.cfo,
                        phi: draw.phi,
                        jam_t0: draw.jam_t0,
                        t0_hat: t_hat,
                        k0_hat: est.k0_hat,
                        cfo_hat: est.cfo_hat(),
                        phi_hat: est.phi0_hat,
                        time_error: circular_distance(t_hat, draw.t0 as f64, l) / l,
                        freq_error: (est.cfo_hat() - draw.cfo).abs(),
                        phase_error: wrap_angle(est.phi0_hat - draw.phi).abs(),
                        low_confidence: est.low_confidence,
                        error: String::new(),
                    }
                }
                Err(e) => failed(trial, k, &draw, e.to_string()),
            }
        })
        .collect()
}

pub const TIME_THRESHOLDS: [f64; 8] = [0.0025, 0.005, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2];
pub const FREQ_THRESHOLDS: [f64; 8] = [0.005, 0.01, 0.02, 0.04, 0.06, 0.1, 0.2, 0.5];

/// Fractions of trials with error below each threshold, per `K`.
pub fn cdf_table(records: &[SyncTrial]) -> Vec<CdfRow> {
    let mut ks: Vec<usize> = records.iter().map(|r| r.k_blocks).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::new();
    for k in ks {
        let sel: Vec<&SyncTrial> = records.iter().filter(|r| r.k_blocks == k).collect();
        let n = sel.len() as f64;
        for (metric, thresholds, get) in [
            ("time", &TIME_THRESHOLDS, (|r: &SyncTrial| r.time_error) as fn(&SyncTrial) -> f64),
            ("freq", &FREQ_THRESHOLDS, |r: &SyncTrial| r.freq_error),
        ] {
            for &t in thresholds.iter() {
                let below = sel.iter().filter(|r| get(r) < t).count();
                rows.push(CdfRow {
                    k_blocks: k,
                    metric: metric.to_string(),
                    threshold: t,
                    fraction: below as f64 / n,
                    trials: sel.len(),
                });
            }
        }
    }
    rows
}

/// Monte-Carlo CDFs of normalized timing and CFO errors.
pub fn run_sync_experiment(scenario: &Scenario) -> Result<ExperimentReport> {
    scenario.validate()?;
    let start = Instant::now();
    let per_trial: Vec<Vec<SyncTrial>> = (0..scenario.trials as u64)
        .into_par_iter()
        .map(|t| run_sync_trial(scenario, t))
        .collect();
    let records: Vec<SyncTrial> = per_trial.into_iter().flatten().collect();
    let failures = records.iter().filter(|r| !r.error.is_empty()).count();
    if failures > 0 {
        log::warn!("{failures} trial evaluations failed; see the error column");
    }
    let cdf = cdf_table(&records);
    let mut report = ExperimentReport::new("sync", scenario);
    report.notes.push(format!("channel model: {}", scenario.channel.model));
    report.notes.push(format!("precoding: {}", scenario.precoding));
    report.notes.push(format!("failed evaluations: {failures}"));
    for row in cdf.iter().filter(|r| {
        (r.metric == "time" && [0.01, 0.02].contains(&r.threshold)) || (r.metric == "freq" && r.threshold == 0.04)
    }) {
        report.notes.push(format!(
            "K={} P({} error < {}) = {:.4}",
            row.k_blocks, row.metric, row.threshold, row.fraction
        ));
    }
    report.sync_trials = records;
    report.cdf = cdf;
    report.elapsed = Some(start.elapsed());
    Ok(report)
}
