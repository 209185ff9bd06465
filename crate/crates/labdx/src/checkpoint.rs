//! JSON checkpoints: parameters with their names and shapes, optimizer and
//! early-stopping state, normalization statistics, seeds and the config hash.

use std::path::Path;

use labdx_core::data::NormStats;
use labdx_core::models::{Architecture, Model, ModelConfig, TrainState};
use labdx_core::numcore::ParamStore;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{read_json, write_json};

pub const CHECKPOINT_FORMAT: &str = "labdx-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub arch: Architecture,
    pub config_hash: String,
    pub seed: u64,
    pub split_seed: u64,
    pub dataset_digest: String,
    pub run_config: RunConfig,
    pub model_config: ModelConfig,
    pub norm_stats: NormStats,
    /// Best parameters once `complete`; otherwise those after the last epoch.
    pub params: ParamStore,
    pub train_state: TrainState,
    pub complete: bool,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let ckpt: Checkpoint = read_json(path)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CliError::Data(format!(
                "{}: unsupported checkpoint format {:?}",
                path.display(),
                ckpt.format
            )));
        }
        if ckpt.arch != ckpt.model_config.arch {
            return Err(CliError::Data(format!(
                "{}: architecture tag {} disagrees with the model config",
                path.display(),
                ckpt.arch
            )));
        }
        if ckpt.run_config.hash() != ckpt.config_hash {
            return Err(CliError::Config(format!(
                "{}: config hash mismatch",
                path.display()
            )));
        }
        Ok(ckpt)
    }

    pub fn model(&self) -> CliResult<Model> {
        Ok(Model::from_params(
            self.model_config.clone(),
            self.params.clone(),
        )?)
    }

    /// Fails unless the checkpoint holds a finished model of `arch`.
    pub fn require(&self, arch: &[Architecture]) -> CliResult<()> {
        if !self.complete {
            return Err(CliError::Config(
                "checkpoint is from an unfinished run; resume training first".into(),
            ));
        }
        if !arch.contains(&self.arch) {
            let names: Vec<&str> = arch.iter().map(|a| a.name()).collect();
            return Err(CliError::Config(format!(
                "checkpoint holds a {} model; this command needs {}",
                self.arch,
                names.join(" or ")
            )));
        }
        Ok(())
    }
}
