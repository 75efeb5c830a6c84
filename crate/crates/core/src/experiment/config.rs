use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::SplitSpec;
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;
use crate::rng::derive_seed;
use crate::secure::SecureLossConfig;
use crate::semcom::{PowerNorm, TrainSnr};

/// Which classifier the secure modules are trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    WhiteBox,
    BlackBox,
}

impl AttackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackMode::WhiteBox => "white_box",
            AttackMode::BlackBox => "black_box",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    pub mnist_dir: PathBuf,
    /// Use the synthetic prototype dataset instead of MNIST.
    pub synthetic: bool,
    pub synthetic_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub train: TrainSnr,
    /// Bob's SNR for training and single-point evaluation.
    pub snr_db: f64,
    /// Eve's SNR; `None` means equal to Bob's.
    pub eve_snr_db: Option<f64>,
    pub power_norm: PowerNorm,
    pub snr_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecureSection {
    pub loss: SecureLossConfig,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub tolerance: f64,
    pub optimizer: OptimizerConfig,
    /// Retrain the modules at every SNR grid point instead of once.
    pub retrain_per_snr: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub data: u64,
    pub init: u64,
    pub noise: u64,
    pub eval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub psr_epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: AttackMode,
    pub data: DataConfig,
    pub split: SplitSpec,
    pub channel: ChannelSection,
    pub base: PhaseConfig,
    pub eve: PhaseConfig,
    pub substitute: PhaseConfig,
    pub secure: SecureSection,
    pub seeds: Seeds,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let phase = PhaseConfig {
            epochs: 20,
            batch_size: 128,
            optimizer: OptimizerConfig::default(),
        };
        Self {
            mode: AttackMode::WhiteBox,
            data: DataConfig {
                mnist_dir: PathBuf::from("data/mnist"),
                synthetic: false,
                synthetic_samples: 6000,
            },
            split: SplitSpec::default(),
            channel: ChannelSection {
                train: TrainSnr::Fixed { snr_db: 10.0 },
                snr_db: 10.0,
                eve_snr_db: None,
                power_norm: PowerNorm::PerDimension,
                snr_grid: (0..=10).map(|i| 2.0 * i as f64).collect(),
            },
            base: phase,
            eve: phase,
            substitute: phase,
            secure: SecureSection {
                loss: SecureLossConfig::default(),
                max_epochs: 50,
                batch_size: 128,
                tolerance: 1e-5,
                optimizer: OptimizerConfig::default(),
                retrain_per_snr: false,
            },
            seeds: Seeds {
                data: 0,
                init: 1,
                noise: 2,
                eval: 3,
            },
            sweep: SweepSection {
                psr_epsilons: vec![0.01, 0.0178, 0.0316, 0.0562, 0.1, 0.178, 0.316],
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()).map_err(|e| Error::file(path, e))
    }

    /// Replaces every seed with one derived from `master`. Derived seeds
    /// keep 63 bits so they stay representable as TOML integers.
    pub fn with_master_seed(mut self, master: u64) -> Self {
        let derive = |i| derive_seed(master, i) >> 1;
        self.seeds = Seeds {
            data: derive(0),
            init: derive(1),
            noise: derive(2),
            eval: derive(3),
        };
        self.split.shuffle_seed = self.seeds.data;
        self
    }

    pub fn eve_snr_db(&self) -> f64 {
        self.channel.eve_snr_db.unwrap_or(self.channel.snr_db)
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.secure.loss.validate()?;
        for (name, phase) in [("base", &self.base), ("eve", &self.eve), ("substitute", &self.substitute)] {
            if phase.batch_size == 0 {
                return Err(Error::Config(format!("{name}.batch_size must be at least 1")));
            }
        }
        if self.secure.batch_size == 0 {
            return Err(Error::Config("secure.batch_size must be at least 1".into()));
        }
        if self.channel.snr_grid.is_empty() {
            return Err(Error::Config("channel.snr_grid is empty".into()));
        }
        if self.sweep.psr_epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::Config("sweep.psr_epsilons must be positive".into()));
        }
        Ok(())
    }
}
