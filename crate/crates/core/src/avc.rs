//! Symbol-level jamming channel `R = S + e^{jΘ} J + N` seen by one
//! subcarrier after secure decoding.
//!
//! Every law used here is a finite mixture of circular complex Gaussians
//! (point masses are zero-variance components), so conditional and
//! marginal densities of `R` are exact and the mutual information estimate
//! only carries Monte-Carlo error.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::complex_gaussian;
use crate::error::{config_err, Result};
use crate::stats::{bootstrap_mean_ci, ks_two_sample, KsResult};
use crate::txchain::Constellation;

/// Parameters of the symbol channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolChannelSpec {
    /// Shape of `Φ`; rescaled to power `p_s`.
    pub constellation: Constellation,
    pub p_s: f64,
    pub p_j: f64,
    pub p_n: f64,
    pub phase_randomization: bool,
    /// Size of the phase alphabet `{2πm/M}`.
    pub m: u32,
}

impl SymbolChannelSpec {
    pub fn qpsk(p_s: f64, p_j: f64, p_n: f64, phase_randomization: bool, m: u32) -> Self {
        Self {
            constellation: Constellation::Qpsk,
            p_s,
            p_j,
            p_n,
            phase_randomization,
            m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("P_S", self.p_s), ("P_J", self.p_j), ("P_N", self.p_n)] {
            if !(v >= 0.0 && v.is_finite()) {
                return config_err(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        if self.m == 0 {
            return config_err("phase alphabet needs at least one phase");
        }
        if !(self.constellation.power() > 0.0) {
            return config_err("constellation has zero power");
        }
        Ok(())
    }

    /// `Φ` scaled to average power `P_S`.
    pub fn phi(&self) -> Vec<Complex64> {
        let g = (self.p_s / self.constellation.power()).sqrt();
        self.constellation.points().into_iter().map(|p| p * g).collect()
    }

    /// Phase factors `e^{jθ}`; just `1` without randomization.
    pub fn phases(&self) -> Vec<Complex64> {
        if !self.phase_randomization {
            return vec![Complex64::new(1.0, 0.0)];
        }
        (0..self.m)
            .map(|k| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / self.m as f64))
            .collect()
    }

    fn random_phase<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let p = self.phases();
        p[rng.random_range(0..p.len())]
    }
}

/// One mixture component: weight, mean and variance (0 for a point mass).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Complex64,
    pub var: f64,
}

/// Finite mixture of circular complex Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture(Vec<Component>);

impl Mixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return config_err("mixture needs at least one component");
        }
        if components.iter().any(|c| !(c.weight >= 0.0) || !(c.var >= 0.0)) {
            return config_err("mixture weights and variances must be >= 0");
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return config_err(format!("mixture weights sum to {total}, not 1"));
        }
        Ok(Self(components))
    }

    /// Uniform over points.
    pub fn points(points: &[Complex64]) -> Self {
        let w = 1.0 / points.len() as f64;
        Self(
            points
                .iter()
                .map(|&mean| Component { weight: w, mean, var: 0.0 })
                .collect(),
        )
    }

    /// `CN(mean, var)`.
    pub fn gaussian(mean: Complex64, var: f64) -> Self {
        Self(vec![Component { weight: 1.0, mean, var }])
    }

    pub fn components(&self) -> &[Component] {
        &self.0
    }

    /// `E|X|^2`.
    pub fn power(&self) -> f64 {
        self.0.iter().map(|c| c.weight * (c.mean.norm_sqr() + c.var)).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.0.last().expect("non-empty");
        for c in &self.0 {
            acc += c.weight;
            if u < acc {
                pick = c;
                break;
            }
        }
        if pick.var > 0.0 {
            pick.mean + complex_gaussian(rng, pick.var)
        } else {
            pick.mean
        }
    }

    /// Law of `e^{jΘ} X` for `Θ` uniform over the given phases.
    pub fn rotated(&self, phases: &[Complex64]) -> Self {
        let m = phases.len() as f64;
        Self(
            self.0
                .iter()
                .flat_map(|c| {
                    phases.iter().map(move |p| Component {
                        weight: c.weight / m,
                        mean: c.mean * p,
                        var: c.var,
                    })
                })
                .collect(),
        )
    }
}

/// Jamming law.
#[derive(Clone, Debug, PartialEq)]
pub enum JammingDist {
    /// Uniform over `Φ`, rescaled to power `P_J`.
    DisguisedFromPhi,
    /// `CN(0, P_J)`.
    Gaussian,
    FixedPoint(Complex64),
    Custom(Mixture),
}

impl JammingDist {
    pub fn mixture(&self, spec: &SymbolChannelSpec) -> Mixture {
        match self {
            JammingDist::DisguisedFromPhi => {
                let g = if spec.p_s > 0.0 { (spec.p_j / spec.p_s).sqrt() } else { 0.0 };
                let pts: Vec<Complex64> = spec.phi().into_iter().map(|p| p * g).collect();
                Mixture::points(&pts)
            }
            JammingDist::Gaussian => Mixture::gaussian(Complex64::new(0.0, 0.0), spec.p_j),
            JammingDist::FixedPoint(z) => Mixture::points(&[*z]),
            JammingDist::Custom(m) => m.clone(),
        }
    }
}

/// Input law.
#[derive(Clone, Debug, PartialEq)]
pub enum InputDist {
    /// Uniform over `Φ`.
    Constellation,
    /// `CN(0, P_S)`.
    Gaussian,
    Custom(Mixture),
}

impl InputDist {
    pub fn mixture(&self, spec: &SymbolChannelSpec) -> Mixture {
        match self {
            InputDist::Constellation => Mixture::points(&spec.phi()),
            InputDist::Gaussian => Mixture::gaussian(Complex64::new(0.0, 0.0), spec.p_s),
            InputDist::Custom(m) => m.clone(),
        }
    }
}

/// i.i.d. `(S, R)` pairs with `S` uniform over `Φ`.
pub fn simulate_symbol_channel(
    spec: &SymbolChannelSpec,
    jamming: &JammingDist,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(Complex64, Complex64)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = spec.phi();
    let jam = jamming.mixture(spec);
    Ok((0..n_samples)
        .map(|_| {
            let s = phi[rng.random_range(0..phi.len())];
            let j = jam.sample(&mut rng);
            let r = s + spec.random_phase(&mut rng) * j + complex_gaussian(&mut rng, spec.p_n);
            (s, r)
        })
        .collect())
}

/// Draws from `W(r | s, j)`: fixed input and jamming symbols, random phase
/// and noise.
pub fn conditional_samples<R: Rng + ?Sized>(
    spec: &SymbolChannelSpec,
    s: Complex64,
    j: Complex64,
    n_samples: usize,
    rng: &mut R,
) -> Vec<Complex64> {
    (0..n_samples)
        .map(|_| s + spec.random_phase(rng) * j + complex_gaussian(rng, spec.p_n))
        .collect()
}

/// `log2(1 + P_S / (P_J + P_N))`; `+∞` when `P_J + P_N = 0`.
pub fn avc_capacity(p_s: f64, p_j: f64, p_n: f64) -> Result<f64> {
    for (name, v) in [("P_S", p_s), ("P_J", p_j), ("P_N", p_n)] {
        if !(v >= 0.0) {
            return config_err(format!("{name} = {v} must be >= 0"));
        }
    }
    let d = p_j + p_n;
    if d == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((p_s / d).ln_1p() / std::f64::consts::LN_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CapacityRow {
    pub p_s: f64,
    pub p_j: f64,
    pub p_n: f64,
    pub capacity: f64,
}

/// Capacity over every `(P_S, P_J, P_N)` drawn from `values`.
pub fn capacity_grid(values: &[f64]) -> Result<Vec<CapacityRow>> {
    let mut rows = Vec::with_capacity(values.len().pow(3));
    for &p_s in values {
        for &p_j in values {
            for &p_n in values {
                rows.push(CapacityRow {
                    p_s,
                    p_j,
                    p_n,
                    capacity: avc_capacity(p_s, p_j, p_n)?,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MiEstimate {
    /// Bits per channel use.
    pub bits: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
    /// The 95% interval is wider than `MI_TARGET_HALF_WIDTH`.
    pub widened: bool,
}

impl MiEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

pub const MI_TARGET_HALF_WIDTH: f64 = 0.01;
const BOOTSTRAP_RESAMPLES: usize = 200;
const CHUNK: usize = 4096;

fn ln_normal(r: Complex64, mean: Complex64, var: f64) -> f64 {
    -(std::f64::consts::PI * var).ln() - (r - mean).norm_sqr() / var
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Monte-Carlo `I(S; R)` with exact densities and a bootstrap 95% CI.
pub fn mi_estimate(
    spec: &SymbolChannelSpec,
    input: &InputDist,
    jamming: &JammingDist,
    n_samples: usize,
    seed: u64,
) -> Result<MiEstimate> {
    spec.validate()?;
    if n_samples < 2 {
        return config_err("mutual information needs at least 2 samples");
    }
    let inp = input.mixture(spec);
    // e^{jΘ} J as one mixture
    let jam = jamming.mixture(spec).rotated(&spec.phases());
    if jam.components().iter().any(|c| c.var + spec.p_n <= 0.0) {
        return config_err("mutual information needs positive noise or Gaussian jamming variance");
    }
    let ln2 = std::f64::consts::LN_2;
    let chunks = n_samples.div_ceil(CHUNK);
    let d: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let (inp, jam) = (&inp, &jam);
            (0..len)
                .map(move |_| {
                    let s = inp.sample(&mut rng);
                    let r = s + jam.sample(&mut rng) + complex_gaussian(&mut rng, spec.p_n);
                    let cond = log_sum_exp(
                        jam.components()
                            .iter()
                            .map(|b| b.weight.ln() + ln_normal(r, s + b.mean, b.var + spec.p_n)),
                    );
                    let marg = log_sum_exp(inp.components().iter().flat_map(|a| {
                        jam.components().iter().map(move |b| {
                            a.weight.ln() + b.weight.ln() + ln_normal(r, a.mean + b.mean, a.var + b.var + spec.p_n)
                        })
                    }));
                    (cond - marg) / ln2
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let bits = d.iter().sum::<f64>() / d.len() as f64;
    let (lo, hi) = bootstrap_mean_ci(&d, BOOTSTRAP_RESAMPLES, 0.95, seed ^ 0x9e37_79b9_7f4a_7c15);
    let widened = (hi - lo) / 2.0 > MI_TARGET_HALF_WIDTH;
    if widened {
        log::warn!(
            "MI interval half-width {:.4} bits exceeds {MI_TARGET_HALF_WIDTH}; use more samples",
            (hi - lo) / 2.0
        );
    }
    Ok(MiEstimate {
        bits,
        ci_low: lo,
        ci_high: hi,
        n_samples,
        widened,
    })
}

/// Alternative input/jamming laws at (at most) the nominal power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DeviationFamily {
    /// No deviation; equals the saddle point by construction.
    Identity,
    Qpsk,
    /// Equiprobable `±√P`.
    TwoPoint,
    /// `CN(0, fP)`.
    ScaledGaussian(f64),
    /// `CN(μ, (1-f)P)` with `|μ|^2 = fP`.
    ShiftedGaussian(f64),
}

pub const STANDARD_FAMILIES: [DeviationFamily; 4] = [
    DeviationFamily::Qpsk,
    DeviationFamily::TwoPoint,
    DeviationFamily::ScaledGaussian(0.5),
    DeviationFamily::ShiftedGaussian(0.5),
];

impl DeviationFamily {
    pub fn mixture(&self, power: f64) -> Mixture {
        let zero = Complex64::new(0.0, 0.0);
        match *self {
            DeviationFamily::Identity => Mixture::gaussian(zero, power),
            DeviationFamily::Qpsk => {
                let pts: Vec<Complex64> = Constellation::Qpsk.points().into_iter().map(|p| p * power.sqrt()).collect();
                Mixture::points(&pts)
            }
            DeviationFamily::TwoPoint => {
                let a = Complex64::new(power.sqrt(), 0.0);
                Mixture::points(&[a, -a])
            }
            DeviationFamily::ScaledGaussian(f) => Mixture::gaussian(zero, f * power),
            DeviationFamily::ShiftedGaussian(f) => {
                Mixture::gaussian(Complex64::new((f * power).sqrt(), 0.0), (1.0 - f) * power)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DeviationFamily::Identity => "identity".into(),
            DeviationFamily::Qpsk => "qpsk".into(),
            DeviationFamily::TwoPoint => "two_point".into(),
            DeviationFamily::ScaledGaussian(f) => format!("scaled_gaussian_{f}"),
            DeviationFamily::ShiftedGaussian(f) => format!("shifted_gaussian_{f}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleRow {
    pub family: String,
    /// `input` deviates `F_S`, `jamming` deviates `F_J`.
    pub side: &'static str,
    pub estimate: MiEstimate,
    /// Inequality holds within the intervals.
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SaddleReport {
    pub star: MiEstimate,
    pub capacity: f64,
    pub rows: Vec<SaddleRow>,
}

impl SaddleReport {
    pub fn all_hold(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

/// Checks `φ(F_S, F_J*) ≤ φ(F_S*, F_J*) ≤ φ(F_S*, F_J)` around Gaussian input
/// and jamming on the phase-randomized channel. All estimates share the
/// seed, so the identity deviation reproduces the saddle value exactly.
pub fn saddle_check(
    p_s: f64,
    p_j: f64,
    p_n: f64,
    families: &[DeviationFamily],
    n_samples: usize,
    seed: u64,
) -> Result<SaddleReport> {
    let spec = SymbolChannelSpec::qpsk(p_s, p_j, p_n, true, 16);
    let star = mi_estimate(&spec, &InputDist::Gaussian, &JammingDist::Gaussian, n_samples, seed)?;
    let mut rows = Vec::new();
    for f in families {
        let dev_in = mi_estimate(&spec, &InputDist::Custom(f.mixture(p_s)), &JammingDist::Gaussian, n_samples, seed)?;
        rows.push(SaddleRow {
            family: f.label(),
            side: "input",
            holds: dev_in.ci_low <= star.ci_high,
            estimate: dev_in,
        });
        let dev_j = mi_estimate(&spec, &InputDist::Gaussian, &JammingDist::Custom(f.mixture(p_j)), n_samples, seed)?;
        rows.push(SaddleRow {
            family: f.label(),
            side: "jamming",
            holds: star.ci_low <= dev_j.ci_high,
            estimate: dev_j,
        });
    }
    Ok(SaddleReport {
        star,
        capacity: avc_capacity(p_s, p_j, p_n)?,
        rows,
    })
}

/// KS comparison of `W(r | s, s')` against `W(r | s', s)` for one ordered pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTest {
    pub s: usize,
    pub s_prime: usize,
    pub re: KsResult,
    pub im: KsResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryReport {
    pub alpha: f64,
    /// Bonferroni level applied to each one-dimensional test.
    pub per_test_alpha: f64,
    pub pairs: Vec<PairTest>,
}

impl SymmetryReport {
    pub fn pair_rejects(&self, p: &PairTest) -> bool {
        p.re.rejects(self.per_test_alpha) || p.im.rejects(self.per_test_alpha)
    }

    pub fn rejecting_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| self.pair_rejects(p)).count()
    }

    /// No pair is told apart: the channel looks symmetrizable.
    pub fn all_indistinguishable(&self) -> bool {
        self.rejecting_pairs() == 0
    }

    pub fn all_distinguished(&self) -> bool {
        self.rejecting_pairs() == self.pairs.len()
    }
}

/// Disguised jamming sends `s'` while the user sends `s`; symmetry means the
/// receiver cannot tell that from the swapped roles. Tests every ordered
/// pair `s ≠ s'` of `Φ` on the real and imaginary parts.
pub fn symmetry_witness(spec: &SymbolChannelSpec, n_samples: usize, alpha: f64, seed: u64) -> Result<SymmetryReport> {
    spec.validate()?;
    if n_samples == 0 {
        return config_err("symmetry witness needs samples");
    }
    let phi = spec.phi();
    let g = if spec.p_s > 0.0 { (spec.p_j / spec.p_s).sqrt() } else { 0.0 };
    let idx: Vec<(usize, usize)> = (0..phi.len())
        .flat_map(|a| (0..phi.len()).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let pairs: Vec<PairTest> = idx
        .par_iter()
        .enumerate()
        .map(|(t, &(a, b))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let x = conditional_samples(spec, phi[a], phi[b] * g, n_samples, &mut rng);
            let y = conditional_samples(spec, phi[b], phi[a] * g, n_samples, &mut rng);
            let part = |v: &[Complex64], f: fn(&Complex64) -> f64| v.iter().map(f).collect::<Vec<f64>>();
            PairTest {
                s: a,
                s_prime: b,
                re: ks_two_sample(&part(&x, |z| z.re), &part(&y, |z| z.re)),
                im: ks_two_sample(&part(&x, |z| z.im), &part(&y, |z| z.im)),
            }
        })
        .collect();
    let tests = 2 * pairs.len().max(1);
    Ok(SymmetryReport {
        alpha,
        per_test_alpha: alpha / tests as f64,
        pairs,
    })
}
