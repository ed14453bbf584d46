use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::report::ExperimentReport;
use super::{trial_rng, Scenario};
use crate::channel::{channel_models, complex_gaussian, ChannelParams};
use crate::error::{config_err, Result};
use super::sync_exp::plan_source;
use crate::keystream::{phase_models, PlanSource};
use crate::rxchain::ldpc::shipped_code;
use crate::rxchain::{ldpc_bp_decode, llr_qpsk, map_qpsk, Encoder, ParityCheckCode};
use crate::txchain::{stable_hash, OfdmConfig};

/// One BER operating point, evaluated at symbol level with perfect
/// synchronization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BerRequest {
    pub rate: String,
    pub snr_db: f64,
    pub sjr_db: f64,
    pub precoding: bool,
    pub channel_model: String,
    pub channel: ChannelParams,
    pub max_frames: usize,
    pub target_errors: usize,
    pub bp_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BerPoint {
    pub rate: String,
    pub snr_db: f64,
    pub sjr_db: f64,
    pub precoding: bool,
    pub channel_model: String,
    pub rician_k0_db: f64,
    pub frames: usize,
    pub frame_errors: usize,
    pub bit_errors: usize,
    pub bits: usize,
    pub ber: f64,
}

struct FrameOutcome {
    bit_errors: usize,
    bits: usize,
}

/// Frequency response of a tap set on carrier `i`.
fn response(taps: &[crate::channel::Tap], i: usize, body: f64) -> Complex64 {
    taps.iter()
        .map(|t| t.gain * Complex64::from_polar(1.0, -2.0 * PI * i as f64 * t.delay / body))
        .sum()
}

/// Draws a uniformly random codeword.
fn random_codeword(enc: &Encoder, rng: &mut ChaCha8Rng) -> Result<(Vec<u8>, Vec<u8>)> {
    let info: Vec<u8> = (0..enc.k()).map(|_| rng.random_range(0..2u8)).collect();
    let cw = enc.encode(&info)?;
    Ok((info, cw))
}

#[allow(clippy::too_many_arguments)]
fn run_frame(
    req: &BerRequest,
    code: &ParityCheckCode,
    enc: &Encoder,
    plans: &dyn PlanSource,
    ofdm: &OfdmConfig,
    frame: u64,
    rng: &mut ChaCha8Rng,
) -> Result<FrameOutcome> {
    let nc = ofdm.n_carriers;
    let (info, cw) = random_codeword(enc, rng)?;
    let s = map_qpsk(&cw)?;
    // the jammer sends another codeword of the same code in the same format
    let (_, jcw) = random_codeword(enc, rng)?;
    let pj = 10f64.powf(-req.sjr_db / 10.0);
    let sigma2 = 10f64.powf(-req.snr_db / 10.0);
    let j: Vec<Complex64> = map_qpsk(&jcw)?.into_iter().map(|z| z * pj.sqrt()).collect();
    let model = channel_models().get(&req.channel_model)?;
    let n_blocks = s.len().div_ceil(nc);
    let mut eq = Vec::with_capacity(s.len());
    for b in 0..n_blocks {
        let plan = plans.plan(frame * n_blocks as u64 + b as u64);
        // the channel holds for one block
        let taps = model.realize(&req.channel, ofdm, sigma2, rng).taps;
        for i in 0..nc {
            let idx = b * nc + i;
            if idx >= s.len() {
                break;
            }
            let rot = if req.precoding { plan.rotation(i) } else { Complex64::new(1.0, 0.0) };
            let h = response(&taps, i, ofdm.body_duration());
            let r = h * rot * s[idx] + j[idx] + complex_gaussian(rng, sigma2);
            // secure decode; no equalization
            eq.push(r * rot.conj());
        }
    }
    let llr = llr_qpsk(&eq, pj + sigma2);
    let out = ldpc_bp_decode(code, &llr, req.bp_iters)?;
    let decoded = enc.extract(&out.bits);
    let bit_errors = decoded.iter().zip(&info).filter(|(a, b)| a != b).count();
    Ok(FrameOutcome {
        bit_errors,
        bits: info.len(),
    })
}

const BATCH: usize = 32;

/// Runs frames until `target_errors` bit errors or `max_frames`. Frames are
/// evaluated in parallel batches but folded in order, so the stopping frame
/// does not depend on the thread count.
pub fn run_ber_point(
    req: &BerRequest,
    code: &ParityCheckCode,
    ofdm: &OfdmConfig,
    plans: &dyn PlanSource,
    master_seed: u64,
) -> Result<BerPoint> {
    if req.max_frames == 0 {
        return config_err("max_frames must be at least 1");
    }
    if !code.n().is_multiple_of(2) {
        return config_err("QPSK mapping needs an even code length");
    }
    let enc = Encoder::new(code);
    let tag = format!(
        "{}|{}|{}|{}|{}|{}",
        req.rate, req.snr_db, req.sjr_db, req.precoding, req.channel_model, req.channel.rician_k0_db
    );
    let point_seed = master_seed ^ u64::from_str_radix(&stable_hash(&tag), 16).expect("hex hash");
    let (mut frames, mut frame_errors, mut bit_errors, mut bits) = (0, 0, 0, 0);
    'outer: while frames < req.max_frames {
        let hi = (frames + BATCH).min(req.max_frames);
        let batch: Vec<Result<FrameOutcome>> = (frames..hi)
            .into_par_iter()
            .map(|f| {
                let mut rng = trial_rng(point_seed, f as u64);
                run_frame(req, code, &enc, plans, ofdm, f as u64, &mut rng)
            })
            .collect();
        for o in batch {
            let o = o?;
            frames += 1;
            bits += o.bits;
            bit_errors += o.bit_errors;
            frame_errors += usize::from(o.bit_errors > 0);
            if bit_errors >= req.target_errors {
                break 'outer;
            }
        }
    }
    Ok(BerPoint {
        rate: req.rate.clone(),
        snr_db: req.snr_db,
        sjr_db: req.sjr_db,
        precoding: req.precoding,
        channel_model: req.channel_model.clone(),
        rician_k0_db: req.channel.rician_k0_db,
        frames,
        frame_errors,
        bit_errors,
        bits,
        ber: bit_errors as f64 / bits as f64,
    })
}

fn code_for(scenario: &Scenario, rate: &str) -> Result<ParityCheckCode> {
    match &scenario.ber.code_file {
        Some(path) => ParityCheckCode::load_alist(std::path::Path::new(path)),
        None => shipped_code(rate),
    }
}

fn base_request(scenario: &Scenario, rate: &str, snr_db: f64, precoding: bool) -> BerRequest {
    BerRequest {
        rate: rate.to_string(),
        snr_db,
        sjr_db: scenario.jammer.sjr_db,
        precoding,
        channel_model: scenario.channel.model.clone(),
        channel: scenario.channel.params.clone(),
        max_frames: scenario.ber.max_frames,
        target_errors: scenario.ber.target_errors,
        bp_iters: scenario.ber.bp_iters,
    }
}

/// Plans of the scenario's phase model; an insecure model still gets
/// keystream plans because `BerRequest::precoding` decides rotation.
fn plans_for(scenario: &Scenario) -> Result<Box<dyn PlanSource>> {
    let model = if phase_models().get(&scenario.precoding)?.is_secure() {
        scenario.precoding.as_str()
    } else {
        "keystream"
    };
    plan_source(scenario, model, scenario.master_seed)
}

/// BER over every (rate, SNR) of the scenario. `precoding` selects secure
/// decoding; `None` runs both settings.
pub fn run_ber_experiment(scenario: &Scenario, precoding: Option<bool>) -> Result<ExperimentReport> {
    scenario.validate()?;
    let start = Instant::now();
    let plans = plans_for(scenario)?;
    let settings: Vec<bool> = match precoding {
        Some(p) => vec![p],
        None => vec![false, true],
    };
    let mut points = Vec::new();
    for rate in &scenario.ber.rates {
        let code = code_for(scenario, rate)?;
        for &p in &settings {
            for &snr in &scenario.ber.snr_db {
                let req = base_request(scenario, rate, snr, p);
                points.push(run_ber_point(&req, &code, &scenario.ofdm, plans.as_ref(), scenario.master_seed)?);
            }
        }
    }
    let mut report = ExperimentReport::new("ber", scenario);
    report.notes.push(format!("channel model: {}", scenario.channel.model));
    report.notes.push("perfect synchronization, jammer sends codewords of the same code".into());
    for p in &points {
        report.notes.push(format!(
            "rate {} precoding {} SNR {} dB: BER {:.3e} ({} errors / {} bits)",
            p.rate,
            if p.precoding { "on" } else { "off" },
            p.snr_db,
            p.ber,
            p.bit_errors,
            p.bits
        ));
    }
    report.ber = points;
    report.elapsed = Some(start.elapsed());
    Ok(report)
}

/// BER against the Rician factor at one rate and the scenario's SNR.
pub fn run_rician_sweep(scenario: &Scenario, rate: &str, precoding: bool) -> Result<ExperimentReport> {
    scenario.validate()?;
    let start = Instant::now();
    let plans = plans_for(scenario)?;
    let code = code_for(scenario, rate)?;
    let mut points = Vec::new();
    for &k0 in &scenario.ber.rician_k0_db {
        let mut req = base_request(scenario, rate, scenario.snr_db, precoding);
        req.channel_model = "rician".into();
        req.channel.rician_k0_db = k0;
        points.push(run_ber_point(&req, &code, &scenario.ofdm, plans.as_ref(), scenario.master_seed)?);
    }
    let mut report = ExperimentReport::new("ber-rician", scenario);
    for p in &points {
        report.notes.push(format!(
            "rate {} K0 {} dB: BER {:.3e} ({} errors / {} bits)",
            p.rate, p.rician_k0_db, p.ber, p.bit_errors, p.bits
        ));
    }
    report.ber = points;
    report.elapsed = Some(start.elapsed());
    Ok(report)
}
