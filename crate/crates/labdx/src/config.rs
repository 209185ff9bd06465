//! Run configuration: a TOML file whose fields can be overridden by flags.

use std::path::{Path, PathBuf};

use labdx_core::data::SynthConfig;
use labdx_core::models::{Architecture, TrainConfig};
use labdx_core::numcore::AdamConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::experiment::ModelSpec;

/// Where episodes come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory written by `synth` (episodes.jsonl + manifest.json).
    pub dataset: Option<PathBuf>,
    /// Long-format lab events CSV: episode_id, patient_id, day, test_id, value.
    pub events: Option<PathBuf>,
    /// Episode labels CSV: episode_id, label.
    pub labels: Option<PathBuf>,
    /// TOML schema with `num_tests`, `num_classes` and categorical maps.
    pub schema: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: Architecture,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub eta: f64,
    /// Weight of the cross-entropy; 0 gives the unsupervised VAE / VRNN.
    pub disc_weight: f64,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub split_seeds: Vec<u64>,
    /// Share of observed cells hidden by `impute`.
    pub drop_rate: f64,
    /// Architectures compared by `report`.
    pub report_models: Vec<Architecture>,
    pub class_names: Vec<String>,
    pub data: DataConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            model: Architecture::VrnnNn,
            hidden_dim: 64,
            latent_dim: 32,
            eta: 0.5,
            disc_weight: 1.0,
            lr: adam.lr,
            lr_decay: adam.lr_decay,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            clip_norm: 5.0,
            seed: 0,
            split_seeds: vec![1, 2, 3, 4, 5],
            drop_rate: 0.10,
            report_models: Architecture::ALL.to_vec(),
            class_names: Vec::new(),
            data: DataConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train_config().validate()?;
        self.model_spec().model_config(1, 2).validate()?;
        if self.split_seeds.is_empty() {
            return Err(CliError::Config("split_seeds must not be empty".into()));
        }
        if !(self.drop_rate > 0.0 && self.drop_rate < 1.0) {
            return Err(CliError::Config(format!(
                "drop_rate {} outside (0, 1)",
                self.drop_rate
            )));
        }
        self.synth.validate()?;
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            arch: self.model,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            eta: self.eta,
            disc_weight: self.disc_weight,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                lr: self.lr,
                lr_decay: self.lr_decay,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            seed: self.seed,
            sample_latents: true,
        }
    }

    /// SHA-256 of the canonical JSON form, first 16 hex digits.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        hex::encode(digest)[..16].to_string()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
