use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::nn::{ArchConfig, ModelKind};
use crate::optim::TrainConfig;
use crate::pipeline::{FixtureConfig, PipelineConfig};

/// Relative data paths are looked up here when they do not exist relative to
/// the working directory.
pub const DATA_DIR_ENV: &str = "TCN_NIDS_DATA_DIR";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Input length, channels and class count are taken from the split.
    pub arch: ArchConfig,
}

/// Everything a run needs. Loaded from TOML; command-line flags override.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// A CSV file for `preprocess`, a split directory for `train`,
    /// `evaluate` and `compare`.
    pub data: Option<PathBuf>,
    pub fixture: Option<FixtureConfig>,
    pub pipeline: Option<PipelineConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| arg_err(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| arg_err("a seed is required (--seed or `seed` in the config)"))
    }

    pub fn pipeline_or_default(&self) -> PipelineConfig {
        self.pipeline.clone().unwrap_or_default()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Exactly one of a data file or fixture settings.
    pub fn data_source(&self) -> Result<DataSource> {
        match (&self.data, &self.fixture) {
            (Some(p), None) => Ok(DataSource::Csv(resolve_data_path(p))),
            (None, Some(f)) => Ok(DataSource::Fixture(f.clone())),
            (Some(_), Some(_)) => Err(arg_err("give either a data file or fixture settings, not both")),
            (None, None) => Err(arg_err("no data source: pass --data or add a [fixture] section")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Fixture(FixtureConfig),
}

pub fn resolve_data_path(p: &Path) -> PathBuf {
    if p.is_relative() && !p.exists() {
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            let candidate = Path::new(&dir).join(p);
            if candidate.exists() {
                return candidate;
            }
        }
    }
    p.to_path_buf()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionName {
    Train,
    Val,
    #[default]
    Test,
}

impl PartitionName {
    pub fn as_str(self) -> &'static str {
        match self {
            PartitionName::Train => "train",
            PartitionName::Val => "val",
            PartitionName::Test => "test",
        }
    }
}

impl FromStr for PartitionName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(PartitionName::Train),
            "val" | "validation" => Ok(PartitionName::Val),
            "test" => Ok(PartitionName::Test),
            other => Err(arg_err(format!("unknown partition `{other}` (train, val, test)"))),
        }
    }
}
