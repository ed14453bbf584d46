use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{config_err, Error, Result};
use crate::jammer::CpPhaseMode;
use crate::keystream::{phase_models, SecretKey};
use crate::sync::SyncConfig;
use crate::txchain::{stable_hash, OfdmConfig};

/// How legitimate offsets are drawn per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetDistribution {
    /// CFO drawn uniformly from `[-max_cfo, max_cfo]` subcarrier spacings.
    pub max_cfo: f64,
    #[serde(default = "yes")]
    pub random_phase: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub model: String,
    #[serde(default)]
    pub params: ChannelParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JammerSection {
    pub strategy: String,
    pub sjr_db: f64,
    #[serde(default)]
    pub cp_phase_mode: CpPhaseMode,
    /// Minimum circular distance in samples between jammer and legitimate
    /// timing; 0 draws the jammer offset uniformly over the block.
    #[serde(default)]
    pub min_separation: usize,
    pub max_cfo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSettings {
    pub rates: Vec<String>,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub rician_k0_db: Vec<f64>,
    pub max_frames: usize,
    pub target_errors: usize,
    pub bp_iters: usize,
    /// Optional alist file replacing the shipped codes.
    #[serde(default)]
    pub code_file: Option<String>,
}

impl Default for BerSettings {
    fn default() -> Self {
        Self {
            rates: vec!["1/4".into(), "1/3".into(), "1/2".into()],
            snr_db: vec![9.0, 12.0, 15.0],
            rician_k0_db: vec![3.0, 6.0, 10.0],
            max_frames: 6000,
            target_errors: 100,
            bp_iters: 50,
            code_file: None,
        }
    }
}

/// Everything one experiment needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub trials: usize,
    pub master_seed: u64,
    /// 32 or 64 hex characters; derived from the seed when absent.
    #[serde(default)]
    pub key: Option<String>,
    #[serde(default)]
    pub epoch: u32,
    pub snr_db: f64,
    /// Phase model name: `keystream`, `continuous` or `off`.
    pub precoding: String,
    pub ofdm: OfdmConfig,
    pub offsets: OffsetDistribution,
    pub channel: ChannelSection,
    pub jammer: JammerSection,
    pub sync: SyncConfig,
    /// Averaging lengths reported; `[sync.k_blocks]` when empty.
    #[serde(default)]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub ber: BerSettings,
}

impl Scenario {
    /// AWGN at 15 dB with equal-power disguised jamming, `K = 25`.
    pub fn table1_awgn() -> Self {
        Self {
            name: "table1-awgn".into(),
            trials: 500,
            master_seed: 1,
            key: None,
            epoch: 0,
            snr_db: 15.0,
            precoding: "keystream".into(),
            ofdm: OfdmConfig::table1(),
            offsets: OffsetDistribution {
                max_cfo: 2.5,
                random_phase: true,
            },
            channel: ChannelSection {
                model: "awgn".into(),
                params: ChannelParams::default(),
            },
            jammer: JammerSection {
                strategy: "disguised_ofdm".into(),
                sjr_db: 0.0,
                cp_phase_mode: CpPhaseMode::PlainCp,
                min_separation: 0,
                max_cfo: 2.5,
            },
            sync: SyncConfig::table1(25),
            k_list: vec![],
            ber: BerSettings::default(),
        }
    }

    pub fn table1_static_multipath() -> Self {
        let mut s = Self::table1_awgn();
        s.name = "table1-static-multipath".into();
        s.channel.model = "static_multipath".into();
        s
    }

    pub fn table1_doppler() -> Self {
        let mut s = Self::table1_awgn();
        s.name = "table1-doppler".into();
        s.channel.model = "doppler_multipath".into();
        s.sync.k_blocks = 30;
        s
    }

    pub fn ber_awgn() -> Self {
        let mut s = Self::table1_awgn();
        s.name = "ber-awgn".into();
        s
    }

    pub fn ber_rician() -> Self {
        let mut s = Self::table1_awgn();
        s.name = "ber-rician".into();
        s.channel.model = "rician".into();
        s
    }

    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "table1-awgn" => Self::table1_awgn(),
            "table1-static-multipath" => Self::table1_static_multipath(),
            "table1-doppler" => Self::table1_doppler(),
            "ber-awgn" => Self::ber_awgn(),
            "ber-rician" => Self::ber_rician(),
            _ => return None,
        })
    }

    pub const PRESETS: [&'static str; 5] = [
        "table1-awgn",
        "table1-static-multipath",
        "table1-doppler",
        "ber-awgn",
        "ber-rician",
    ];

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return config_err("trials must be at least 1");
        }
        self.ofdm.validate()?;
        self.sync.validate(&self.ofdm)?;
        phase_models().get(&self.precoding)?;
        crate::channel::channel_models().get(&self.channel.model)?;
        crate::jammer::jammer_strategies().get(&self.jammer.strategy)?;
        if self.k_list.iter().any(|&k| k < 2) {
            return config_err("every K in k_list must be at least 2");
        }
        if self.jammer.min_separation * 2 >= self.ofdm.block_samples() {
            return config_err("jammer separation leaves no admissible offset");
        }
        self.secret_key()?;
        Ok(())
    }

    pub fn k_values(&self) -> Vec<usize> {
        if self.k_list.is_empty() {
            vec![self.sync.k_blocks]
        } else {
            self.k_list.clone()
        }
    }

    pub fn secret_key(&self) -> Result<SecretKey> {
        match &self.key {
            Some(hex) => SecretKey::from_hex(hex),
            None => Ok(SecretKey::random(&mut super::trial_rng(self.master_seed, u64::MAX))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Short hash of the canonical TOML form.
    pub fn hash(&self) -> String {
        stable_hash(&self.to_toml())
    }

    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            message: e.to_string().trim_end().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }
}

/// Reads a TOML scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text, &path.display().to_string())
}
