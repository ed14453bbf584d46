use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use spofdm::avc::{capacity_grid, mi_estimate, saddle_check, InputDist, JammingDist, SymbolChannelSpec, STANDARD_FAMILIES};
use spofdm::harness::{
    correlation_surface, emit_report, load_scenario, run_ber_experiment, run_rician_sweep, run_sync_experiment,
    write_csv, ExperimentReport, Scenario,
};
use spofdm::keystream::{self_test, SecretKey};

#[derive(Parser)]
#[command(name = "spofdm", version, about = "Securely precoded OFDM under disguised jamming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synchronization error CDFs.
    Sync {
        #[command(flatten)]
        common: Common,
        /// Averaging lengths to evaluate, e.g. `10,25,40`.
        #[arg(long, value_delimiter = ',')]
        k_list: Vec<usize>,
    },
    /// Coded BER with perfect synchronization.
    Ber {
        #[command(flatten)]
        common: Common,
        /// Also sweep the Rician factor at this rate.
        #[arg(long)]
        rician_rate: Option<String>,
    },
    /// Pre-FFT correlation surfaces.
    Surface {
        #[command(flatten)]
        common: Common,
        /// Blocks averaged.
        #[arg(long, default_value_t = 40)]
        k: usize,
    },
    /// Closed-form capacity grid, MI table and saddle check.
    Capacity {
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Monte-Carlo samples per MI estimate.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
    /// AES known answers and keystream determinism.
    KeystreamSelftest {
        /// 32 or 64 hex characters.
        #[arg(long, default_value = "000102030405060708090a0b0c0d0e0f")]
        key: String,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file or preset name.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    sjr_db: Option<f64>,
    #[arg(long, value_enum)]
    precoding: Option<OnOff>,
    /// 32 or 64 hex characters.
    #[arg(long)]
    key: Option<String>,
}

impl Common {
    fn scenario(&self, default: &str) -> Result<Scenario> {
        let name = self.scenario.as_deref().unwrap_or(default);
        let mut s = if Path::new(name).exists() {
            load_scenario(Path::new(name))?
        } else if let Some(p) = Scenario::preset(name) {
            p
        } else {
            bail!("{name} is neither a file nor a preset ({})", Scenario::PRESETS.join(", "));
        };
        if let Some(seed) = self.seed {
            s.master_seed = seed;
        }
        if let Some(t) = self.trials {
            s.trials = t;
        }
        if let Some(sjr) = self.sjr_db {
            s.jammer.sjr_db = sjr;
        }
        if let Some(k) = &self.key {
            SecretKey::from_hex(k).context("--key")?;
            s.key = Some(k.clone());
        }
        match self.precoding {
            Some(OnOff::Off) => s.precoding = "off".into(),
            Some(OnOff::On) if s.precoding == "off" => s.precoding = "keystream".into(),
            _ => {}
        }
        s.validate()?;
        Ok(s)
    }
}

fn finish(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let files = emit_report(report, dir)?;
    print!("{}", report.summary());
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn capacity(out_dir: &Path, seed: u64, samples: usize) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let grid = capacity_grid(&[0.5, 1.0, 2.0])?;
    println!("p_s,p_j,p_n,capacity");
    for r in &grid {
        println!("{},{},{},{:.12}", r.p_s, r.p_j, r.p_n, r.capacity);
    }
    write_csv(&out_dir.join("capacity.csv"), &grid)?;

    #[derive(serde::Serialize)]
    struct MiRow {
        input: &'static str,
        jamming: &'static str,
        phase_randomization: bool,
        bits: f64,
        ci_low: f64,
        ci_high: f64,
        n_samples: usize,
    }
    let mut mi = Vec::new();
    for phase in [false, true] {
        let spec = SymbolChannelSpec::qpsk(1.0, 1.0, 0.1, phase, 16);
        let e = mi_estimate(&spec, &InputDist::Constellation, &JammingDist::DisguisedFromPhi, samples, seed)?;
        mi.push(MiRow {
            input: "qpsk",
            jamming: "disguised",
            phase_randomization: phase,
            bits: e.bits,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            n_samples: e.n_samples,
        });
    }
    write_csv(&out_dir.join("mi.csv"), &mi)?;
    let saddle = saddle_check(1.0, 1.0, 1.0, &STANDARD_FAMILIES, samples, seed)?;
    #[derive(serde::Serialize)]
    struct SaddleLine<'a> {
        family: &'a str,
        side: &'a str,
        bits: f64,
        ci_low: f64,
        ci_high: f64,
        star_bits: f64,
        holds: bool,
    }
    let lines: Vec<SaddleLine> = saddle
        .rows
        .iter()
        .map(|r| SaddleLine {
            family: &r.family,
            side: r.side,
            bits: r.estimate.bits,
            ci_low: r.estimate.ci_low,
            ci_high: r.estimate.ci_high,
            star_bits: saddle.star.bits,
            holds: r.holds,
        })
        .collect();
    write_csv(&out_dir.join("saddle.csv"), &lines)?;
    for m in &mi {
        eprintln!(
            "MI qpsk/disguised, phase randomization {}: {:.4} bits [{:.4}, {:.4}]",
            m.phase_randomization, m.bits, m.ci_low, m.ci_high
        );
    }
    eprintln!(
        "saddle point: {:.4} bits [{:.4}, {:.4}], closed form {:.6}, all inequalities hold: {}",
        saddle.star.bits,
        saddle.star.ci_low,
        saddle.star.ci_high,
        saddle.capacity,
        saddle.all_hold()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sync { common, k_list } => {
            let mut s = common.scenario("table1-awgn")?;
            if !k_list.is_empty() {
                s.k_list = k_list;
                s.validate()?;
            }
            finish(&run_sync_experiment(&s)?, &common.out_dir)
        }
        Command::Ber { common, rician_rate } => {
            let s = common.scenario("ber-awgn")?;
            let precoding = common.precoding.map(|p| p == OnOff::On);
            finish(&run_ber_experiment(&s, precoding)?, &common.out_dir)?;
            if let Some(rate) = rician_rate {
                let sweep = run_rician_sweep(&s, &rate, precoding.unwrap_or(true))?;
                finish(&sweep, &common.out_dir.join("rician"))?;
            }
            Ok(())
        }
        Command::Surface { common, k } => {
            let mut s = common.scenario("table1-awgn")?;
            s.sync.k_blocks = k;
            if common.trials.is_none() {
                s.trials = 1;
            }
            let precoding = common.precoding.unwrap_or(OnOff::On) == OnOff::On;
            finish(&correlation_surface(&s, precoding)?, &common.out_dir)
        }
        Command::Capacity { out_dir, seed, samples } => capacity(&out_dir, seed, samples),
        Command::KeystreamSelftest { key } => {
            let key = SecretKey::from_hex(&key).context("--key")?;
            let checks = self_test(&key, 16, 128)?;
            for c in &checks {
                println!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
            }
            if checks.iter().any(|c| !c.passed) {
                bail!("keystream self-test failed");
            }
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
