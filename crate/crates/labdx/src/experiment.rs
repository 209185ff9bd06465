//! The evaluation protocols: per-seed splits, model training, the frozen
//! feature protocol and the drop-and-score imputation protocol.

use labdx_core::data::{
    apply_normalization, fit_normalization, split_dataset, truncate_latest, LabSequence, NormStats,
    MAX_DAYS,
};
use labdx_core::imputation::{
    evaluate_imputation, Heuristic, ImputationRun, Imputer, ModelImputer,
};
use labdx_core::metrics::{per_class_report, MetricsReport};
use labdx_core::models::{
    evaluate_predictions, Architecture, Model, ModelConfig, TrainConfig, TrainOutcome, Trainer,
};
use labdx_core::rng::derive_seed;
use labdx_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Normalized train/dev/test episodes for one split seed.
#[derive(Clone, Debug)]
pub struct PreparedSplit {
    pub seed: u64,
    pub train: Vec<LabSequence>,
    pub dev: Vec<LabSequence>,
    pub test: Vec<LabSequence>,
    pub stats: NormStats,
}

/// Truncates to the latest 100 days, splits 65/15/20 and Z-normalizes with
/// train-only statistics.
pub fn prepare_split(raw: &[LabSequence], seed: u64) -> Result<PreparedSplit> {
    let truncated: Vec<LabSequence> = raw.iter().map(|s| truncate_latest(s, MAX_DAYS)).collect();
    let split = split_dataset(&truncated, seed)?;
    let stats = fit_normalization(&split.train)?;
    let norm = |xs: &[LabSequence]| -> Vec<LabSequence> {
        xs.iter().map(|s| apply_normalization(s, &stats)).collect()
    };
    Ok(PreparedSplit {
        seed,
        train: norm(&split.train),
        dev: norm(&split.dev),
        test: norm(&split.test),
        stats,
    })
}

/// The trainable parts of a run's configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub eta: f64,
    pub disc_weight: f64,
}

impl ModelSpec {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            hidden_dim: 64,
            latent_dim: 32,
            eta: 0.5,
            disc_weight: 1.0,
        }
    }

    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self {
            arch: cfg.arch,
            hidden_dim: cfg.hidden_dim,
            latent_dim: cfg.latent_dim,
            eta: cfg.eta,
            disc_weight: cfg.disc_weight,
        }
    }

    pub fn model_config(&self, input_dim: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            input_dim,
            num_classes,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            eta: self.eta,
            disc_weight: self.disc_weight,
        }
    }

    /// Display name; purely generative runs drop the `+NN` suffix.
    pub fn display_name(&self) -> String {
        let base = match self.arch {
            Architecture::Nn => "NN",
            Architecture::AeNn => "AE+NN",
            Architecture::VaeNn => "VAE+NN",
            Architecture::RnnNn => "RNN+NN",
            Architecture::VrnnNn => "VRNN+NN",
        };
        if self.disc_weight == 0.0 {
            base.trim_end_matches("+NN").to_string()
        } else {
            base.to_string()
        }
    }
}

pub fn num_tests(split: &PreparedSplit) -> Result<usize> {
    split.train.first().map(|s| s.tests()).ok_or(Error::TooFew {
        required: 1,
        found: 0,
    })
}

/// A fresh trainer for `spec` on the split. Initialization and training
/// streams are derived from the run seed and the split seed.
pub fn trainer_for_split(
    split: &PreparedSplit,
    spec: &ModelSpec,
    num_classes: usize,
    train: &TrainConfig,
) -> Result<Trainer> {
    let cfg = spec.model_config(num_tests(split)?, num_classes);
    let model = Model::new(cfg, derive_seed(&[train.seed, split.seed, 1]))?;
    Trainer::new(model, split_train_config(train, split.seed))
}

/// The training configuration actually used on a split.
pub fn split_train_config(train: &TrainConfig, split_seed: u64) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(&[train.seed, split_seed, 2]),
        ..train.clone()
    }
}

pub fn train_on_split(
    split: &PreparedSplit,
    spec: &ModelSpec,
    num_classes: usize,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    trainer_for_split(split, spec, num_classes, train)?.run(&split.train, &split.dev)
}

pub fn evaluate_model(
    model: &Model,
    seqs: &[LabSequence],
    class_names: &[String],
) -> Result<MetricsReport> {
    let preds = evaluate_predictions(model, seqs)?;
    Ok(per_class_report(&preds, class_names))
}

/// Wraps a feature vector as a fully observed one-day episode so the NN
/// baseline can consume it unchanged.
fn as_episode(seq: &LabSequence, features: Vec<f64>) -> Result<LabSequence> {
    let dim = features.len();
    LabSequence::new(
        seq.episode_id.clone(),
        seq.label,
        1,
        dim,
        features,
        vec![true; dim],
    )
}

pub fn feature_episodes(model: &Model, seqs: &[LabSequence]) -> Result<Vec<LabSequence>> {
    seqs.iter()
        .map(|s| as_episode(s, model.features(s)?))
        .collect()
}

/// Frozen-feature protocol: extract features from `source`, train a fresh
/// NN on them and score it on the test split.
pub fn feature_transfer(
    source: &Model,
    split: &PreparedSplit,
    head: &ModelSpec,
    train: &TrainConfig,
    class_names: &[String],
) -> Result<(TrainOutcome, MetricsReport)> {
    let feats = PreparedSplit {
        seed: split.seed,
        train: feature_episodes(source, &split.train)?,
        dev: feature_episodes(source, &split.dev)?,
        test: feature_episodes(source, &split.test)?,
        stats: split.stats.clone(),
    };
    let spec = ModelSpec {
        arch: Architecture::Nn,
        ..head.clone()
    };
    let outcome = train_on_split(&feats, &spec, source.config().num_classes, train)?;
    let report = evaluate_model(&outcome.model, &feats.test, class_names)?;
    Ok((outcome, report))
}

pub const MODEL_METHOD: &str = "VRNN";

/// Scores the four heuristics and the model on one drop seed.
pub fn imputation_run(
    model: &Model,
    seqs: &[LabSequence],
    rate: f64,
    seed: u64,
) -> Result<ImputationRun> {
    let imputer = ModelImputer {
        model,
        name: MODEL_METHOD.into(),
    };
    let mut methods: Vec<&dyn Imputer> = Heuristic::ALL.iter().map(|h| h as &dyn Imputer).collect();
    methods.push(&imputer);
    evaluate_imputation(seqs, &methods, rate, seed)
}
