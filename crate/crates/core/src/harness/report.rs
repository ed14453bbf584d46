use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use super::ber::BerPoint;
use super::surface::PeakRow;
use super::sync_exp::SyncTrial;
use super::Scenario;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CdfRow {
    pub k_blocks: usize,
    /// `time` or `freq`.
    pub metric: String,
    pub threshold: f64,
    pub fraction: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurfaceRow {
    pub tau: usize,
    /// Empty when the surface is collapsed over `d`.
    pub d: Option<i64>,
    pub re: f64,
    pub im: f64,
    pub magnitude: f64,
}

/// Everything an experiment produced. Only `elapsed` varies between runs
/// with the same scenario, and it is written to the summary alone.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub kind: String,
    pub scenario: Scenario,
    pub sync_trials: Vec<SyncTrial>,
    pub cdf: Vec<CdfRow>,
    pub ber: Vec<BerPoint>,
    pub surface: Vec<SurfaceRow>,
    pub peaks: Vec<PeakRow>,
    pub notes: Vec<String>,
    pub elapsed: Option<Duration>,
}

impl ExperimentReport {
    pub fn new(kind: &str, scenario: &Scenario) -> Self {
        Self {
            kind: kind.to_string(),
            scenario: scenario.clone(),
            sync_trials: Vec::new(),
            cdf: Vec::new(),
            ber: Vec::new(),
            surface: Vec::new(),
            peaks: Vec::new(),
            notes: Vec::new(),
            elapsed: None,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {}", self.kind);
        let _ = writeln!(s, "scenario: {}", self.scenario.name);
        let _ = writeln!(s, "scenario hash: {}", self.scenario.hash());
        let _ = writeln!(s, "ofdm config hash: {}", self.scenario.ofdm.config_hash());
        let _ = writeln!(s, "master seed: {}", self.scenario.master_seed);
        let _ = writeln!(s, "trials: {}", self.scenario.trials);
        for n in &self.notes {
            let _ = writeln!(s, "{n}");
        }
        if let Some(e) = self.elapsed {
            let _ = writeln!(s, "wall clock: {:.3} s", e.as_secs_f64());
        }
        s
    }
}

/// Writes `rows` with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the non-empty tables, `scenario.toml` and `summary.txt` into
/// `dir`. Returns the paths written.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut table = |name: &str, empty: bool, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        if !empty {
            let p = dir.join(name);
            f(&p)?;
            written.push(p);
        }
        Ok(())
    };
    table("trials.csv", report.sync_trials.is_empty(), &|p| write_csv(p, &report.sync_trials))?;
    table("cdf.csv", report.cdf.is_empty(), &|p| write_csv(p, &report.cdf))?;
    table("ber.csv", report.ber.is_empty(), &|p| write_csv(p, &report.ber))?;
    table("surface.csv", report.surface.is_empty(), &|p| write_csv(p, &report.surface))?;
    table("peaks.csv", report.peaks.is_empty(), &|p| write_csv(p, &report.peaks))?;
    let sc = dir.join("scenario.toml");
    fs::write(&sc, report.scenario.to_toml())?;
    written.push(sc);
    let sum = dir.join("summary.txt");
    fs::write(&sum, report.summary())?;
    written.push(sum);
    Ok(written)
}
