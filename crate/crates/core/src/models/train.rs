use alloc::{format, vec::Vec};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Model, Sampling};
use crate::data::LabSequence;
use crate::metrics::{f1_scores, PredictionSet};
use crate::numcore::{AdamConfig, AdamState};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

const SHUFFLE_TAG: u64 = 0x5348_5546;
const SAMPLE_TAG: u64 = 0x5341_4d50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    pub seed: u64,
    /// Reparameterized latent draws during training; `false` uses means.
    pub sample_latents: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            clip_norm: 5.0,
            seed: 0,
            sample_latents: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(a.lr_decay > 0.0 && a.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps.is_nan()
            || a.eps <= 0.0
        {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// What early stopping watches on the dev split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCriterion {
    /// Higher is better.
    DevMacroF1,
    /// Mean dev objective at posterior means; lower is better.
    DevLoss,
}

impl StopCriterion {
    /// Macro-F1 unless the classifier carries no weight.
    pub fn for_model(model: &Model) -> Self {
        if model.config().disc_weight > 0.0 {
            StopCriterion::DevMacroF1
        } else {
            StopCriterion::DevLoss
        }
    }

    fn better(self, candidate: f64, best: f64) -> bool {
        match self {
            StopCriterion::DevMacroF1 => candidate > best,
            StopCriterion::DevLoss => candidate < best,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_discriminative: f64,
    pub train_generative: f64,
    pub max_grad_norm: f64,
    pub clipped_batches: usize,
    pub dev_loss: f64,
    pub dev_macro_f1: f64,
    pub improved: bool,
}

/// Everything needed to continue a run exactly where it left off.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub next_epoch: usize,
    pub adam: AdamState,
    pub criterion: StopCriterion,
    pub best_score: Option<f64>,
    pub best_epoch: Option<usize>,
    pub best_params: Vec<f64>,
    pub epochs_since_best: usize,
    pub history: Vec<EpochLog>,
    pub finished: bool,
}

pub struct TrainOutcome {
    /// Parameters restored to the best dev epoch.
    pub model: Model,
    pub state: TrainState,
}

/// Mini-batch Adam with gradient clipping and dev-set early stopping.
pub struct Trainer {
    model: Model,
    config: TrainConfig,
    state: TrainState,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let state = TrainState {
            next_epoch: 0,
            adam: AdamState::new(config.adam, model.params()),
            criterion: StopCriterion::for_model(&model),
            best_score: None,
            best_epoch: None,
            best_params: model.params().flatten(),
            epochs_since_best: 0,
            history: Vec::new(),
            finished: false,
        };
        Ok(Self {
            model,
            config,
            state,
        })
    }

    /// Continues from a saved state; `model` holds the parameters at the
    /// end of the last completed epoch.
    pub fn resume(model: Model, config: TrainConfig, state: TrainState) -> Result<Self> {
        config.validate()?;
        if !state.adam.matches(model.params())
            || state.best_params.len() != model.params().num_scalars()
        {
            return Err(Error::InvalidConfig(
                "training state does not match the model parameters".into(),
            ));
        }
        Ok(Self {
            model,
            config,
            state,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    pub fn run_epoch(&mut self, train: &[LabSequence], dev: &[LabSequence]) -> Result<&EpochLog> {
        if train.is_empty() || dev.is_empty() {
            return Err(Error::TooFew {
                required: 1,
                found: 0,
            });
        }
        let epoch = self.state.next_epoch;
        let cfg = &self.config;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(&[cfg.seed, SHUFFLE_TAG, epoch as u64]));

        let mut grads = self.model.zero_grads();
        let (mut sum_total, mut sum_disc, mut sum_gen) = (0.0, 0.0, 0.0);
        let mut max_norm: f64 = 0.0;
        let mut clipped = 0;
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            grads.zero();
            let scale = 1.0 / idx.len() as f64;
            for &i in idx {
                let sampling = if cfg.sample_latents && self.model.arch().is_stochastic() {
                    Sampling::Seeded(derive_seed(&[cfg.seed, SAMPLE_TAG, epoch as u64, i as u64]))
                } else {
                    Sampling::Mean
                };
                let parts = self
                    .model
                    .loss_and_grad(&train[i], sampling, &mut grads, scale)?;
                if !parts.total.is_finite() {
                    return Err(Error::NanLoss { epoch, batch });
                }
                sum_total += parts.total;
                sum_disc += parts.discriminative;
                sum_gen += parts.generative;
            }
            let norm = grads.clip_global_norm(cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
            if norm > cfg.clip_norm {
                clipped += 1;
            }
            max_norm = max_norm.max(norm);
            self.state
                .adam
                .step(self.model.params_mut(), &grads, epoch)?;
            if let Some((name, _)) = self
                .model
                .params()
                .iter()
                .find(|(_, t)| t.data().iter().any(|v| !v.is_finite()))
            {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    param: name.into(),
                });
            }
        }

        let (dev_loss, dev_macro_f1) = dev_scores(&self.model, dev, epoch)?;
        let score = match self.state.criterion {
            StopCriterion::DevMacroF1 => dev_macro_f1,
            StopCriterion::DevLoss => dev_loss,
        };
        let improved = self
            .state
            .best_score
            .is_none_or(|best| self.state.criterion.better(score, best));
        if improved {
            self.state.best_score = Some(score);
            self.state.best_epoch = Some(epoch);
            self.state.best_params = self.model.params().flatten();
            self.state.epochs_since_best = 0;
        } else {
            self.state.epochs_since_best += 1;
        }
        let n = train.len() as f64;
        self.state.history.push(EpochLog {
            epoch,
            lr: cfg.adam.lr_at_epoch(epoch),
            train_loss: sum_total / n,
            train_discriminative: sum_disc / n,
            train_generative: sum_gen / n,
            max_grad_norm: max_norm,
            clipped_batches: clipped,
            dev_loss,
            dev_macro_f1,
            improved,
        });
        self.state.next_epoch += 1;
        self.state.finished =
            self.state.next_epoch >= cfg.max_epochs || self.state.epochs_since_best >= cfg.patience;
        Ok(self.state.history.last().expect("just pushed"))
    }

    /// Trains until early stopping or the epoch cap, then restores the best
    /// parameters.
    pub fn run(mut self, train: &[LabSequence], dev: &[LabSequence]) -> Result<TrainOutcome> {
        while !self.state.finished {
            self.run_epoch(train, dev)?;
        }
        Ok(self.into_best())
    }

    pub fn into_best(mut self) -> TrainOutcome {
        self.model
            .params_mut()
            .load_flat(&self.state.best_params)
            .expect("best parameters share the model layout");
        TrainOutcome {
            model: self.model,
            state: self.state,
        }
    }
}

fn dev_scores(model: &Model, dev: &[LabSequence], epoch: usize) -> Result<(f64, f64)> {
    let c = model.config().num_classes;
    let mut probs = Vec::with_capacity(dev.len() * c);
    let mut labels = Vec::with_capacity(dev.len());
    let mut total = 0.0;
    for seq in dev {
        let parts = model.loss(seq, Sampling::Mean)?;
        if !parts.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "dev loss of episode {:?} after epoch {epoch}",
                seq.episode_id
            )));
        }
        total += parts.total;
        probs.extend_from_slice(&parts.probs);
        labels.push(seq.label);
    }
    let preds = PredictionSet::new(c, probs, labels)?;
    Ok((total / dev.len() as f64, f1_scores(&preds).macro_))
}

/// Posterior-mean class probabilities for every episode.
pub fn evaluate_predictions(model: &Model, seqs: &[LabSequence]) -> Result<PredictionSet> {
    let c = model.config().num_classes;
    let mut probs = Vec::with_capacity(seqs.len() * c);
    for seq in seqs {
        probs.extend(model.predict_proba(seq)?);
    }
    PredictionSet::new(c, probs, seqs.iter().map(|s| s.label).collect())
}
