//! Resolved run configurations. Each run writes one of these as
//! `config.json` next to its outputs; passing it back with `--config`
//! repeats the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use auxmtl_core::model::ModelConfig;
use auxmtl_core::scenegen::{LabelDistribution, SplitSpec};
use auxmtl_core::trainer::{ExperimentSpec, Hyperparams};
use auxmtl_core::TaskSet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_FILE: &str = "config.json";
pub const SEED_ENV: &str = "AUXMTL_SEED";

/// Seed used when neither a flag nor a config file sets one.
pub fn default_seed() -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub n: usize,
    pub seed: u64,
    pub dist: LabelDistribution,
}

/// Where training and test samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub data: PathBuf,
    /// Separate test dataset; all of `data` is then used for training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_data: Option<PathBuf>,
    /// Split file over `data` written by `split`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    pub experiment: ExperimentSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    #[serde(flatten)]
    pub data: DataConfig,
    #[serde(default = "matrix_sets")]
    pub task_sets: Vec<TaskSet>,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub model: ModelConfig,
}

fn matrix_sets() -> Vec<TaskSet> {
    TaskSet::MATRIX.to_vec()
}

/// Ids selected by a split, as written by the `split` command. It records
/// its own parameters and so doubles as the command's resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub data: PathBuf,
    pub spec: SplitSpec,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub buffer: Vec<usize>,
}
