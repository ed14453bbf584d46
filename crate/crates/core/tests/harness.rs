use spofdm::harness::*;
use spofdm::Error;

fn small(name: &str) -> Scenario {
    let mut s = Scenario::preset(name).unwrap();
    s.trials = 12;
    s
}

#[test]
fn jam_free_noiseless_sync_is_exact() {
    let mut s = small("table1-awgn");
    s.jammer.strategy = "none".into();
    s.snr_db = f64::INFINITY;
    s.offsets.max_cfo = 0.0;
    s.trials = 10;
    let rep = run_sync_experiment(&s).unwrap();
    assert_eq!(rep.sync_trials.len(), 10);
    for t in &rep.sync_trials {
        assert!(t.error.is_empty(), "{}", t.error);
        assert_eq!(t.k0_hat, t.k0);
        assert!(t.time_error < 1e-9, "{t:?}");
        assert!(t.freq_error < 1e-9, "{t:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let s = small("table1-static-multipath");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_report(&run_sync_experiment(&s).unwrap(), a.path()).unwrap();
    emit_report(&run_sync_experiment(&s).unwrap(), b.path()).unwrap();
    for f in ["trials.csv", "cdf.csv", "scenario.toml"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let mut other = s.clone();
    other.master_seed += 1;
    let c = run_sync_experiment(&other).unwrap();
    assert_ne!(c.sync_trials, run_sync_experiment(&s).unwrap().sync_trials);
}

#[test]
fn cdf_recomputes_from_trials() {
    let mut s = small("table1-awgn");
    s.k_list = vec![5, 10];
    let rep = run_sync_experiment(&s).unwrap();
    assert_eq!(rep.cdf, cdf_table(&rep.sync_trials));
    for row in &rep.cdf {
        let sel: Vec<_> = rep.sync_trials.iter().filter(|t| t.k_blocks == row.k_blocks).collect();
        let below = sel
            .iter()
            .filter(|t| if row.metric == "time" { t.time_error } else { t.freq_error } < row.threshold)
            .count();
        assert_eq!(row.fraction, below as f64 / sel.len() as f64);
    }
}

#[test]
fn scenario_round_trips_through_report() {
    let mut s = small("ber-rician");
    s.key = Some("00112233445566778899aabbccddeeff".into());
    s.k_list = vec![10, 25];
    let dir = tempfile::tempdir().unwrap();
    let mut rep = ExperimentReport::new("none", &s);
    rep.notes.push("nothing run".into());
    emit_report(&rep, dir.path()).unwrap();
    let back = load_scenario(&dir.path().join("scenario.toml")).unwrap();
    assert_eq!(back, s);
    assert_eq!(back.hash(), s.hash());
    for name in Scenario::PRESETS {
        let p = Scenario::preset(name).unwrap();
        assert_eq!(Scenario::from_toml(&p.to_toml(), name).unwrap(), p);
    }
}

#[test]
fn missing_field_is_named() {
    let text = Scenario::table1_awgn().to_toml().replace("trials = 500\n", "");
    match Scenario::from_toml(&text, "cut.toml") {
        Err(Error::Parse { source_name, message }) => {
            assert_eq!(source_name, "cut.toml");
            assert!(message.contains("trials"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    let text = Scenario::table1_awgn().to_toml().replace("trials = 500", "trials = \"many\"");
    let err = Scenario::from_toml(&text, "bad.toml").unwrap_err().to_string();
    assert!(err.contains("line"), "{err}");
}

#[test]
fn invalid_scenarios_are_config_errors() {
    let mut s = Scenario::table1_awgn();
    s.trials = 0;
    assert!(matches!(s.validate(), Err(Error::Config(_))));
    let mut s = Scenario::table1_awgn();
    s.channel.model = "underwater".into();
    assert!(matches!(s.validate(), Err(Error::Config(_))));
    let mut s = Scenario::table1_awgn();
    s.key = Some("abcd".into());
    assert!(s.validate().is_err());
}

#[test]
fn trial_streams_are_independent() {
    use rand::RngCore;
    let mut seen = std::collections::HashSet::new();
    for id in 0..200 {
        let mut r = trial_rng(7, id);
        assert!(seen.insert(r.next_u64()));
    }
    assert_eq!(trial_rng(7, 3).next_u64(), trial_rng(7, 3).next_u64());
}

#[test]
fn jam_free_surface_has_single_peak() {
    let mut s = small("table1-awgn");
    s.jammer.strategy = "none".into();
    s.trials = 1;
    let tr = surface_trial(&s, "keystream", 40, 0).unwrap();
    let (ti, di, peak) = tr.surface.argmax();
    assert_eq!(tr.surface.taus[ti], tr.draw.t0);
    assert_eq!(tr.surface.candidates[di], tr.draw.k0);
    // away from the correlation triangle the surface is a noise floor whose
    // mean level sits well below the peak
    let l = s.ofdm.block_samples() as f64;
    let mut floor = Vec::new();
    for (i, &tau) in tr.surface.taus.iter().enumerate() {
        if spofdm::sync::circular_distance(tau as f64, tr.draw.t0 as f64, l) < s.ofdm.cp1_samples as f64 {
            continue;
        }
        for j in 0..tr.surface.candidates.len() {
            floor.push(tr.surface.at(i, j).norm() / peak);
        }
    }
    let mean = floor.iter().sum::<f64>() / floor.len() as f64;
    assert!(mean < 0.05, "{mean}");
}

#[test]
fn ber_points_are_deterministic_and_stop_on_target() {
    let mut s = Scenario::ber_awgn();
    s.ber.rates = vec!["1/2".into()];
    s.ber.snr_db = vec![9.0];
    s.ber.max_frames = 40;
    s.ber.target_errors = 100;
    let a = run_ber_experiment(&s, Some(false)).unwrap();
    let b = run_ber_experiment(&s, Some(false)).unwrap();
    assert_eq!(a.ber, b.ber);
    let p = &a.ber[0];
    assert!(p.bit_errors >= 100 && p.frames < 40, "{p:?}");
    assert_eq!(p.bits, p.frames * 1152);
}

