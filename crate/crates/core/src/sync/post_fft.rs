use std::f64::consts::PI;

use num_complex::Complex64;

use crate::dsp;
use crate::error::{config_err, Result};
use crate::keystream::PhasePlan;

/// Removes a normalized CFO `eps` (in subcarrier spacings) referenced to sample 0.
pub fn compensate_cfo(r: &[Complex64], eps: f64, n_carriers: usize) -> Vec<Complex64> {
    let step = -2.0 * PI * eps / n_carriers as f64;
    r.iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, step * n as f64))
        .collect()
}

/// `N`-point DFT of one body window, scaled by `N'/N` and zero-extended to
/// `n_out = N'` bins. With `n_out = N` this is the plain demodulator.
pub fn demod_fft(body: &[Complex64], n_out: usize) -> Vec<Complex64> {
    let n = body.len();
    assert!(n_out >= n, "output length shorter than the body");
    let mut spec = body.to_vec();
    dsp::dft(&mut spec);
    let scale = n_out as f64 / n as f64;
    spec.iter_mut().for_each(|z| *z *= scale);
    spec.resize(n_out, Complex64::new(0.0, 0.0));
    spec
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegerCfo {
    pub n0: i64,
    pub zeta0: f64,
    /// `|avg Γ|` for `n = N_l ..= N_u`.
    pub metric: Vec<f64>,
    pub low_confidence: bool,
}

/// Integer CFO from adjacent-block pilot products, and the residual `ζ0`
/// from the phase of the winning bin.
pub fn estimate_integer_cfo(
    blocks: &[Vec<Complex64>],
    plans: &[PhasePlan],
    pilots: &[(usize, Complex64)],
    n_lower: i64,
    n_upper: i64,
    n_carriers: usize,
    block_samples: usize,
) -> IntegerCfo {
    assert!(blocks.len() >= 2 && plans.len() >= blocks.len());
    let n_prime = blocks[0].len() as i64;
    let pairs = (blocks.len() - 1) as f64;
    let sums: Vec<Complex64> = (n_lower..=n_upper)
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..blocks.len() - 1 {
                for &(ip, _) in pilots {
                    let bin = (ip as i64 + n).rem_euclid(n_prime) as usize;
                    let dtheta = plans[k].subcarrier_phases[ip] - plans[k + 1].subcarrier_phases[ip];
                    acc += blocks[k][bin] * blocks[k + 1][bin].conj() * Complex64::from_polar(1.0, dtheta);
                }
            }
            acc / pairs
        })
        .collect();
    let metric: Vec<f64> = sums.iter().map(|z| z.norm()).collect();
    let mut best = 0;
    for (i, &m) in metric.iter().enumerate() {
        if m > metric[best] {
            best = i;
        }
    }
    let n0 = n_lower + best as i64;
    let second = metric
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &m)| m)
        .fold(0.0, f64::max);
    let n = n_carriers as i64;
    let l = block_samples as i64;
    let known = 2.0 * PI * (n0 * l).rem_euclid(n) as f64 / n as f64;
    let residual = dsp::wrap_angle(sums[best].arg() + known);
    let zeta0 = -residual / (2.0 * PI * l as f64 / n as f64);
    let low_confidence = second * 1.5 > metric[best];
    IntegerCfo {
        n0,
        zeta0,
        metric,
        low_confidence,
    }
}

/// Residual timing `t0'` in samples, folded into `[0, cp2)`.
pub fn estimate_fine_time(
    blocks: &[Vec<Complex64>],
    plans: &[PhasePlan],
    pairs: &[((usize, Complex64), (usize, Complex64))],
    n_carriers: usize,
    cp2_samples: usize,
) -> Result<f64> {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut spacing = None;
    for &((i1, p1), (i2, p2)) in pairs {
        let di = i1 as i64 - i2 as i64;
        if di == 0 {
            return config_err("fine-timing pair uses the same pilot twice");
        }
        if di.unsigned_abs() as usize * cp2_samples > n_carriers {
            return config_err(format!("pilot distance {} is ambiguous over CP2", di.abs()));
        }
        if spacing.is_some_and(|s| s != di) {
            return config_err("fine-timing pairs must share one spacing");
        }
        spacing = Some(di);
        for (b, plan) in blocks.iter().zip(plans) {
            let rot = plan.subcarrier_phases[i1] - plan.subcarrier_phases[i2];
            acc += b[i1] * b[i2].conj() * Complex64::from_polar(1.0, rot) * p1.conj() * p2;
        }
    }
    let Some(di) = spacing else {
        return config_err("no fine-timing pilot pairs");
    };
    let t = -acc.arg() / (2.0 * PI * di as f64 / n_carriers as f64);
    let folded = t.rem_euclid(cp2_samples as f64);
    Ok(if folded >= cp2_samples as f64 { 0.0 } else { folded })
}

/// Carrier phase from the derotated pilots, after removing the pilot phase
/// slope caused by the residual timing `t0p` (samples).
pub fn estimate_phase(
    blocks: &[Vec<Complex64>],
    plans: &[PhasePlan],
    pilots: &[(usize, Complex64)],
    t0p: f64,
    n_carriers: usize,
) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, plan) in blocks.iter().zip(plans) {
        for &(ip, p) in pilots {
            let slope = 2.0 * PI * ip as f64 * t0p / n_carriers as f64;
            acc += b[ip] * p.conj() * Complex64::from_polar(1.0, plan.subcarrier_phases[ip] + slope);
        }
    }
    acc.arg()
}
