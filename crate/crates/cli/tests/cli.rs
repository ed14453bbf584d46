use std::process::Command;

fn spofdm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spofdm"))
}

#[test]
fn selftest_passes() {
    let out = spofdm().args(["keystream-selftest", "--key", &"ab".repeat(32)]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}

#[test]
fn bad_key_and_unknown_scenario_fail() {
    let out = spofdm().args(["keystream-selftest", "--key", "abc"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let dir = tempfile::tempdir().unwrap();
    let out = spofdm()
        .args(["sync", "--scenario", "nope", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("preset"));
    let out = spofdm().args(["ber", "--precoding", "maybe"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn sync_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = spofdm()
        .args(["sync", "--trials", "4", "--seed", "9", "--sjr-db", "-3", "--k-list", "10,20", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trials.csv", "cdf.csv", "scenario.toml", "summary.txt"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 8);
    let scen = std::fs::read_to_string(dir.path().join("scenario.toml")).unwrap();
    assert!(scen.contains("master_seed = 9"));
}

#[test]
fn capacity_prints_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = spofdm()
        .args(["capacity", "--samples", "2000", "--out-dir"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 28);
    assert!(text.contains("1,1,1,0.584962500721"));
    for f in ["capacity.csv", "mi.csv", "saddle.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
