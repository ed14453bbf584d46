use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::channel::{place_with_offsets, OffsetSpec};
use crate::keystream::{IdentityPlans, Keystream, SecretKey};
use crate::txchain::{build_waveform_with, precode, Constellation, SymbolBlock};

fn key() -> SecretKey {
    SecretKey::from_hex("000102030405060708090a0b0c0d0e0f").unwrap()
}

fn ks(ofdm: &OfdmConfig) -> Keystream {
    Keystream::new(&key(), 3, ofdm.psk_order, ofdm.n_carriers).unwrap()
}

/// Record whose keystream block `base + k0` starts at sample `delay`.
fn record(
    ofdm: &OfdmConfig,
    plans: &dyn PlanSource,
    first: u64,
    n_blocks: usize,
    delay: usize,
    eps: f64,
    phi: f64,
    seed: u64,
) -> ComplexSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<_> = (first - 1..first + n_blocks as u64 + 1)
        .map(|k| SymbolBlock::random(ofdm, k, &mut rng))
        .collect();
    let wave = build_waveform_with(&blocks, plans, ofdm).unwrap();
    let offs = OffsetSpec::from_normalized(ofdm, delay as f64, eps, phi);
    let l = ofdm.block_samples();
    place_with_offsets(&wave, l, n_blocks * l, &offs, ofdm.block_duration()).unwrap()
}

fn small_sync(k: usize) -> SyncConfig {
    SyncConfig {
        n_candidates: 8,
        ..SyncConfig::table1(k)
    }
}

#[test]
fn triangle_values() {
    assert_eq!(v_expected(0.0, 16.0), 16.0);
    assert_eq!(v_expected(16.0, 16.0), 0.0);
    assert_eq!(v_expected(-16.0, 16.0), 0.0);
    assert_eq!(v_expected(8.0, 16.0), 8.0);
    assert_eq!(v_expected(40.0, 16.0), 0.0);
}

#[test]
fn correlator_matches_direct_oracle() {
    let ofdm = OfdmConfig {
        n_carriers: 8,
        n_body_samples: 8,
        cp1_samples: 2,
        cp2_samples: 1,
        psk_order: 4,
        constellation: Constellation::Qpsk,
        pilot_positions: vec![],
        pilot_value: Complex64::new(1.0, 0.0),
        sample_interval: 0.5,
    };
    let plans = ks(&ofdm);
    let cfg = SyncConfig {
        keystream_base: 0,
        ..small_sync(1)
    };
    let symbols: Vec<Complex64> = (0..8)
        .map(|i| Complex64::from_polar(1.0, 0.3 + i as f64))
        .collect();
    let blocks = [
        SymbolBlock { block_index: 0, symbols: symbols.clone() },
        SymbolBlock { block_index: 1, symbols: symbols.iter().rev().copied().collect() },
    ];
    let r = build_waveform_with(&blocks, &plans, &ofdm).unwrap();
    // direct synthesis of block 0 from the IDFT sum
    let plan = plans.plan(0);
    let pre = precode(&blocks[0], &plan).unwrap();
    let body = |m: usize| -> Complex64 {
        (0..8)
            .map(|i| pre[i] * Complex64::from_polar(1.0, 2.0 * PI * (i * m) as f64 / 8.0))
            .sum::<Complex64>()
            / 8.0
    };
    let sample = |n: usize| -> Complex64 {
        match n {
            0..=1 => plan.cp_phase * body(8 - 3 + n),
            2 => body(7),
            _ => body(n - 3),
        }
    };
    for n in 0..11 {
        assert!((sample(n) - r.samples[n]).norm() < 1e-12);
    }
    for tau in 0..3 {
        for d in 0..3i64 {
            let c = plans.plan(d as u64).cp_phase.conj();
            let want: Complex64 = (0..2)
                .map(|n| r.samples[tau + n] * r.samples[tau + n + 8].conj())
                .sum::<Complex64>()
                * c
                * 0.5;
            let got = corr_pre_fft(&r, 0, tau, d, &plans, &cfg, &ofdm).unwrap();
            assert!((got - want).norm() < 1e-10);
        }
    }
    assert!(corr_pre_fft(&r, 1, 10, 0, &plans, &cfg, &ofdm).is_none());
}

#[test]
fn per_block_values_at_true_offset() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = small_sync(10);
    let k0 = 3;
    let r = record(&ofdm, &plans, 1000 + k0 as u64, 11, 0, 0.0, 0.0, 1);
    for k in 0..10 {
        let y = corr_pre_fft(&r, k, 0, k0, &plans, &cfg, &ofdm).unwrap();
        assert!(y.im.abs() < 1e-12 * y.norm().max(1e-30) + 1e-18 && y.re >= 0.0);
        let off = corr_pre_fft(&r, k, 0, k0 + 1, &plans, &cfg, &ofdm).unwrap();
        assert!((off.norm() - y.norm()).abs() < 1e-15);
    }
}

#[test]
fn noiseless_pre_fft_is_exact() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = small_sync(10);
    let r = record(&ofdm, &plans, 1005, 11, 0, 0.0, 0.0, 2);
    let est = estimate_pre_fft(&r, &cfg, &ofdm, &plans).unwrap();
    assert_eq!(est.t0_samples, 0);
    assert_eq!(est.k0_hat, 5);
    assert!(!est.low_confidence);
    // peak equals the average CP1 energy times Δt
    let l = ofdm.block_samples();
    let energy: f64 = (0..10)
        .map(|k| crate::dsp::energy(&r.samples[k * l..k * l + 16]))
        .sum::<f64>()
        / 10.0;
    assert!((est.peak - energy * ofdm.sample_interval).abs() < 1e-12 * est.peak);
    assert!(est.frac_cfo.abs() < 1e-9 || (1.0 - est.frac_cfo).abs() < 1e-9);
}

#[test]
fn fractional_cfo_is_recovered() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = small_sync(10);
    let r = record(&ofdm, &plans, 1002, 11, 40, 0.125, 0.3, 3);
    let est = estimate_pre_fft(&r, &cfg, &ofdm, &plans).unwrap();
    assert_eq!(est.t0_samples, 40);
    assert_eq!(est.k0_hat, 2);
    assert!((est.frac_cfo - 0.125).abs() < 1e-6, "{}", est.frac_cfo);
}

#[test]
fn short_record_is_rejected() {
    let ofdm = OfdmConfig::table1();
    let r = ComplexSignal::zeros(152 * 5, ofdm.sample_interval);
    let err = estimate_pre_fft(&r, &small_sync(5), &ofdm, &ks(&ofdm));
    assert!(err.is_err());
}

#[test]
fn flat_surface_is_low_confidence() {
    let ofdm = OfdmConfig::table1();
    let r = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); 152 * 6], ofdm.sample_interval);
    let est = estimate_pre_fft(&r, &small_sync(5), &ofdm, &IdentityPlans { n_carriers: 128 }).unwrap();
    assert!(est.low_confidence);
    // all cells tie, so the lowest index wins
    assert_eq!((est.t0_samples, est.k0_hat), (0, 0));
}

#[test]
fn plain_demod_recovers_precoded_symbols() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let b = SymbolBlock::random(&ofdm, 7, &mut rng);
    let plan = plans.plan(7);
    let pre = precode(&b, &plan).unwrap();
    let sig = crate::txchain::modulate_block(&pre, plan.cp_phase, &ofdm).unwrap();
    let body = &sig.samples[24..];
    let plain = demod_fft(body, 128);
    for (a, s) in plain.iter().zip(&pre) {
        assert!((a - s).norm() < 1e-9);
    }
    let wide = demod_fft(body, 135);
    assert_eq!(wide.len(), 135);
    for i in 0..128 {
        assert!((wide[i] - pre[i] * (135.0 / 128.0)).norm() < 1e-9);
    }
    assert!(wide[128..].iter().all(|z| z.norm() == 0.0));
}

#[test]
fn integer_cfo_shifts_bins() {
    let ofdm = OfdmConfig::table1();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = SymbolBlock::random(&ofdm, 0, &mut rng);
    let sig = crate::txchain::modulate_block(&b.symbols, Complex64::new(1.0, 0.0), &ofdm).unwrap();
    let body: Vec<Complex64> = sig.samples[24..]
        .iter()
        .enumerate()
        .map(|(n, z)| z * Complex64::from_polar(1.0, 2.0 * PI * 2.0 * n as f64 / 128.0))
        .collect();
    let r = demod_fft(&body, 135);
    for i in 0..126 {
        assert!((r[i + 2] - b.symbols[i] * (135.0 / 128.0)).norm() < 1e-9);
    }
}

fn demod_all(
    r: &ComplexSignal,
    ofdm: &OfdmConfig,
    start: usize,
    k: usize,
    n_out: usize,
) -> Vec<Vec<Complex64>> {
    let l = ofdm.block_samples();
    (0..k)
        .map(|b| {
            let s = start + b * l + ofdm.cp_samples();
            demod_fft(&r.samples[s..s + 128], n_out)
        })
        .collect()
}

fn pilots(ofdm: &OfdmConfig) -> Vec<(usize, Complex64)> {
    ofdm.pilot_positions.iter().map(|&i| (i, ofdm.pilot_value)).collect()
}

#[test]
fn integer_cfo_estimator_noiseless() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let block_plans: Vec<_> = (0..6).map(|k| plans.plan(2000 + k)).collect();
    for n0 in [0i64, 3, -4] {
        let r = record(&ofdm, &plans, 2000, 7, 0, n0 as f64, 0.0, 6);
        let blocks = demod_all(&r, &ofdm, 0, 6, 135);
        let est = estimate_integer_cfo(&blocks, &block_plans, &pilots(&ofdm), -4, 3, 128, 152);
        assert_eq!(est.n0, n0);
        assert!(est.zeta0.abs() < 1e-9, "{}", est.zeta0);
        if n0 == 0 {
            let want = 16.0 * (135.0f64 / 128.0).powi(2);
            assert!((est.metric[4] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn residual_cfo_is_recovered() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let block_plans: Vec<_> = (0..6).map(|k| plans.plan(2000 + k)).collect();
    let r = record(&ofdm, &plans, 2000, 7, 0, 2.03, 0.0, 7);
    let blocks = demod_all(&r, &ofdm, 0, 6, 135);
    let est = estimate_integer_cfo(&blocks, &block_plans, &pilots(&ofdm), -4, 3, 128, 152);
    assert_eq!(est.n0, 2);
    assert!((est.zeta0 - 0.03).abs() < 5e-3, "{}", est.zeta0);
}

#[test]
fn fine_time_and_phase_noiseless() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = SyncConfig::table1(5);
    let pairs: Vec<_> = cfg
        .pilot_pairs(&ofdm)
        .unwrap()
        .into_iter()
        .map(|(a, b)| ((a, ofdm.pilot_value), (b, ofdm.pilot_value)))
        .collect();
    assert_eq!(pairs.len(), 14);
    let block_plans: Vec<_> = (0..5).map(|k| plans.plan(3000 + k)).collect();
    for (t0p, phi) in [(0usize, 0.0), (4, PI / 3.0), (7, -1.0)] {
        // window starts t0p samples before the body
        let r = record(&ofdm, &plans, 3000, 6, t0p, 0.0, phi, 8);
        let blocks = demod_all(&r, &ofdm, 0, 5, 128);
        let t = estimate_fine_time(&blocks, &block_plans, &pairs, 128, 8).unwrap();
        assert!((t - t0p as f64).abs() < 1e-9, "{t}");
        let p = estimate_phase(&blocks, &block_plans, &pilots(&ofdm), t, 128);
        assert!(crate::dsp::wrap_angle(p - phi).abs() < 1e-9);
    }
}

#[test]
fn ambiguous_pairs_are_rejected() {
    let ofdm = OfdmConfig::table1();
    let cfg = SyncConfig {
        pair_spacing: 24,
        ..SyncConfig::table1(5)
    };
    assert!(cfg.pilot_pairs(&ofdm).is_err());
    let blocks = vec![vec![Complex64::new(1.0, 0.0); 128]];
    let plans = vec![crate::keystream::PhasePlan::identity(0, 128)];
    let p = Complex64::new(1.0, 0.0);
    assert!(estimate_fine_time(&blocks, &plans, &[((4, p), (36, p))], 128, 8).is_err());
    assert!(estimate_fine_time(&blocks, &plans, &[((4, p), (4, p))], 128, 8).is_err());
}

#[test]
fn config_validation() {
    let ofdm = OfdmConfig::table1();
    assert!(SyncConfig { k_blocks: 0, ..SyncConfig::table1(1) }.validate(&ofdm).is_err());
    assert!(SyncConfig { n_lower: 4, ..SyncConfig::table1(1) }.validate(&ofdm).is_err());
    assert!(SyncConfig { n_candidates: 0, ..SyncConfig::table1(1) }.validate(&ofdm).is_err());
    assert!(SyncConfig { tau_grid: Some(vec![152]), ..SyncConfig::table1(1) }.validate(&ofdm).is_err());
    assert_eq!(SyncConfig::table1(1).n_prime(&ofdm), 135);
}

#[test]
fn full_pipeline_noiseless_random_offsets() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = small_sync(6);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..10 {
        let t0 = rng.random_range(0..152usize);
        let k0 = rng.random_range(0..8i64);
        let eps = rng.random_range(-2.5..2.5);
        let phi = rng.random_range(-PI..PI);
        let r = record(&ofdm, &plans, 1000 + k0 as u64, 7, t0, eps, phi, trial);
        let est = synchronize(&r, &cfg, &ofdm, &plans).unwrap();
        let t = est.t0_hat / ofdm.sample_interval;
        assert!(circular_distance(t, t0 as f64, 152.0) < 1e-6, "trial {trial}: {t} vs {t0}");
        assert_eq!(est.k0_hat, k0);
        // the coarse peak may land a sample or two early when K is small;
        // timing is then fixed by the pilots and the CFO carries a tiny ICI bias
        assert!((est.cfo_hat() - eps).abs() < 1e-4, "{:?} vs {eps} t0 {t0}", est);
        assert!(est.t0p_hat >= 0.0 && est.t0p_hat < 8.0 * ofdm.sample_interval);
        assert!(crate::dsp::wrap_angle(est.phi0_hat - phi).abs() < 1e-2, "{} vs {phi}", est.phi0_hat);
    }
}

#[test]
fn tracking_windows_follow_the_stream() {
    let ofdm = OfdmConfig::table1();
    let plans = ks(&ofdm);
    let cfg = small_sync(4);
    let r = record(&ofdm, &plans, 1002, 12, 30, 0.4, 0.0, 10);
    let est = track(&r, &cfg, &ofdm, &plans, 3).unwrap();
    assert_eq!(est.len(), 3);
    for e in &est {
        assert_eq!(e.k0_hat, 2);
        assert!((e.t0_hat / ofdm.sample_interval - 30.0).abs() < 1e-6);
    }
    assert!(track(&r, &cfg, &ofdm, &plans, 0).is_err());
}

proptest! {
    #[test]
    fn triangle_is_symmetric_and_bounded(tau in -40.0f64..40.0, cp1 in 1.0f64..32.0) {
        let v = v_expected(tau, cp1);
        prop_assert_eq!(v, v_expected(-tau, cp1));
        prop_assert!((0.0..=cp1).contains(&v));
    }

    #[test]
    fn circular_distance_is_a_metric_on_the_circle(a in 0.0f64..152.0, b in 0.0f64..152.0) {
        let d = circular_distance(a, b, 152.0);
        prop_assert!((0.0..=76.0).contains(&d));
        prop_assert!((d - circular_distance(b, a, 152.0)).abs() < 1e-9);
    }

    #[test]
    fn cfo_compensation_round_trips(eps in -3.0f64..3.0, n in 1usize..64) {
        let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let y = compensate_cfo(&compensate_cfo(&x, eps, 128), -eps, 128);
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).norm() < 1e-9);
        }
    }
}
