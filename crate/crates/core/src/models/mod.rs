//! The five diagnosis architectures, their objectives and training.
//!
//! Every model reads its input through the observation mask, so whatever a
//! masked cell holds never reaches a loss, a gradient or an output.

mod recurrent;
mod static_nets;
mod train;

use alloc::{string::String, vec, vec::Vec};
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::data::{average_sequence, LabSequence, MaskedVector};
use crate::numcore::{Gradients, ParamStore};
use crate::problayer::PROB_FLOOR;
use crate::rng::{stream, Rng};
use crate::{Error, Result};

pub use recurrent::{
    rnn_forward, vrnn_forward, vrnn_loss, vrnn_step, RnnTrace, VrnnStep, VrnnTrace,
};
pub use static_nets::{ae_forward, ae_loss, nn_forward, vae_forward, vae_loss, AeTrace, VaeTrace};
pub use train::{
    evaluate_predictions, EpochLog, StopCriterion, TrainConfig, TrainOutcome, TrainState, Trainer,
};

use recurrent::{RnnNets, VrnnNets};
use static_nets::{AeNets, NnNets, VaeNets};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Nn,
    AeNn,
    VaeNn,
    RnnNn,
    VrnnNn,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Nn,
        Architecture::AeNn,
        Architecture::VaeNn,
        Architecture::RnnNn,
        Architecture::VrnnNn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Nn => "nn",
            Architecture::AeNn => "ae_nn",
            Architecture::VaeNn => "vae_nn",
            Architecture::RnnNn => "rnn_nn",
            Architecture::VrnnNn => "vrnn_nn",
        }
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Architecture::RnnNn | Architecture::VrnnNn)
    }

    /// Draws latent samples during training.
    pub fn is_stochastic(self) -> bool {
        matches!(self, Architecture::VaeNn | Architecture::VrnnNn)
    }

    pub fn has_generative_loss(self) -> bool {
        matches!(
            self,
            Architecture::AeNn | Architecture::VaeNn | Architecture::VrnnNn
        )
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(alloc::format!(
                    "unknown model `{s}` (expected one of {})",
                    arch_names()
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Architecture,
    pub input_dim: usize,
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Weight of the generative loss.
    pub eta: f64,
    /// Weight of the cross-entropy; 0 trains a purely generative model.
    pub disc_weight: f64,
}

impl ModelConfig {
    pub fn new(arch: Architecture, input_dim: usize, num_classes: usize) -> Self {
        Self {
            arch,
            input_dim,
            num_classes,
            hidden_dim: 64,
            latent_dim: 32,
            eta: 0.5,
            disc_weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.input_dim == 0 || self.hidden_dim == 0 || self.latent_dim == 0 {
            return bad("model dimensions must be positive");
        }
        if self.num_classes < 2 {
            return bad("at least two classes are required");
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta must be finite and non-negative");
        }
        if !(self.disc_weight.is_finite() && self.disc_weight >= 0.0) {
            return bad("disc_weight must be finite and non-negative");
        }
        if self.disc_weight == 0.0 && !self.arch.has_generative_loss() {
            return bad("disc_weight 0 leaves this architecture with no objective");
        }
        Ok(())
    }

    /// Length of [`Model::features`].
    pub fn feature_dim(&self) -> usize {
        match self.arch {
            Architecture::Nn => self.input_dim,
            Architecture::AeNn | Architecture::VaeNn => self.latent_dim,
            Architecture::RnnNn | Architecture::VrnnNn => self.hidden_dim,
        }
    }
}

/// How latent variables are chosen in a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Posterior means; no randomness.
    Mean,
    /// Reparameterized draws from a stream seeded with this value.
    Seeded(u64),
}

impl Sampling {
    pub(crate) fn rng(self) -> Option<Rng> {
        match self {
            Sampling::Mean => None,
            Sampling::Seeded(seed) => Some(stream(&[seed])),
        }
    }
}

/// Per-example objective split into its parts.
#[derive(Clone, Debug, PartialEq)]
pub struct LossParts {
    /// `disc_weight · discriminative + η · generative`.
    pub total: f64,
    /// Cross-entropy of the true label.
    pub discriminative: f64,
    /// Negative ELBO (VAE, VRNN) or masked squared error (AE); 0 otherwise.
    pub generative: f64,
    pub probs: Vec<f64>,
}

impl LossParts {
    pub(crate) fn new(
        config: &ModelConfig,
        discriminative: f64,
        generative: f64,
        probs: Vec<f64>,
    ) -> Self {
        Self {
            total: config.disc_weight * discriminative + config.eta * generative,
            discriminative,
            generative,
            probs,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) enum Nets {
    Nn(NnNets),
    Ae(AeNets),
    Vae(VaeNets),
    Rnn(RnnNets),
    Vrnn(VrnnNets),
}

/// A configured architecture together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    nets: Nets,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut rng = stream(&[seed, 0x1417]);
        let (m, h, l, c) = (
            config.input_dim,
            config.hidden_dim,
            config.latent_dim,
            config.num_classes,
        );
        let nets = match config.arch {
            Architecture::Nn => Nets::Nn(NnNets::new(&mut params, &mut rng, m, h, c)),
            Architecture::AeNn => Nets::Ae(AeNets::new(&mut params, &mut rng, m, h, l, c)),
            Architecture::VaeNn => Nets::Vae(VaeNets::new(&mut params, &mut rng, m, h, l, c)),
            Architecture::RnnNn => Nets::Rnn(RnnNets::new(&mut params, &mut rng, m, h, c)),
            Architecture::VrnnNn => Nets::Vrnn(VrnnNets::new(&mut params, &mut rng, m, h, l, c)),
        };
        Ok(Self {
            config,
            params,
            nets,
        })
    }

    /// Rebuilds a model from stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if !model.params.same_layout(&params) {
            return Err(Error::InvalidConfig(alloc::format!(
                "stored parameters do not match a {} model of this shape",
                model.config.arch
            )));
        }
        params.ensure_finite()?;
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn arch(&self) -> Architecture {
        self.config.arch
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn zero_grads(&self) -> Gradients {
        self.params.zero_grads()
    }

    pub(crate) fn nets(&self) -> &Nets {
        &self.nets
    }

    fn check_input(&self, seq: &LabSequence) -> Result<()> {
        if seq.tests() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                context: "model input tests",
                expected: self.config.input_dim,
                found: seq.tests(),
            });
        }
        if seq.label >= self.config.num_classes {
            return Err(Error::InvalidLabel {
                label: seq.label,
                classes: self.config.num_classes,
            });
        }
        Ok(())
    }

    /// Objective for one episode without gradients.
    pub fn loss(&self, seq: &LabSequence, sampling: Sampling) -> Result<LossParts> {
        self.check_input(seq)?;
        let (cfg, p) = (&self.config, &self.params);
        match &self.nets {
            Nets::Nn(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, None),
            Nets::Ae(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, None),
            Nets::Vae(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, sampling, None),
            Nets::Rnn(n) => n.loss(p, cfg, seq, None),
            Nets::Vrnn(n) => n.loss(p, cfg, seq, sampling, None),
        }
    }

    /// Objective for one episode; accumulates `scale · ∂total/∂θ` into `grads`.
    pub fn loss_and_grad(
        &self,
        seq: &LabSequence,
        sampling: Sampling,
        grads: &mut Gradients,
        scale: f64,
    ) -> Result<LossParts> {
        self.check_input(seq)?;
        let (cfg, p) = (&self.config, &self.params);
        let g = Some((grads, scale));
        match &self.nets {
            Nets::Nn(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, g),
            Nets::Ae(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, g),
            Nets::Vae(n) => n.loss(p, cfg, &average_sequence(seq), seq.label, sampling, g),
            Nets::Rnn(n) => n.loss(p, cfg, seq, g),
            Nets::Vrnn(n) => n.loss(p, cfg, seq, sampling, g),
        }
    }

    /// Class probabilities with latent variables at their posterior means.
    pub fn predict_proba(&self, seq: &LabSequence) -> Result<Vec<f64>> {
        if seq.tests() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                context: "model input tests",
                expected: self.config.input_dim,
                found: seq.tests(),
            });
        }
        let p = &self.params;
        match &self.nets {
            Nets::Nn(n) => n.forward(p, &average_sequence(seq)).map(|t| t.1),
            Nets::Ae(n) => n.forward(p, &average_sequence(seq)).map(|t| t.probs),
            Nets::Vae(n) => n
                .forward(p, &average_sequence(seq), Sampling::Mean)
                .map(|t| t.probs),
            Nets::Rnn(n) => n.forward(p, seq).map(|t| t.probs),
            Nets::Vrnn(n) => n.forward(p, seq, Sampling::Mean).map(|t| t.probs),
        }
    }

    /// Deterministic representation: `E(z | x̃)` for the autoencoders, the
    /// mean hidden state for the recurrent models and the masked averaged
    /// input for NN.
    pub fn features(&self, seq: &LabSequence) -> Result<Vec<f64>> {
        if seq.tests() != self.config.input_dim {
            return Err(Error::ShapeMismatch {
                context: "model input tests",
                expected: self.config.input_dim,
                found: seq.tests(),
            });
        }
        let p = &self.params;
        match &self.nets {
            Nets::Nn(_) => Ok(masked_input(&average_sequence(seq))),
            Nets::Ae(n) => n.forward(p, &average_sequence(seq)).map(|t| t.z),
            Nets::Vae(n) => n
                .forward(p, &average_sequence(seq), Sampling::Mean)
                .map(|t| t.q.mu),
            Nets::Rnn(n) => n.forward(p, seq).map(|t| t.pooled),
            Nets::Vrnn(n) => n.forward(p, seq, Sampling::Mean).map(|t| t.pooled),
        }
    }

    /// VRNN decoder means for every day and test (`T × M`, row-major),
    /// running the recurrence on posterior means.
    pub fn reconstruct(&self, seq: &LabSequence) -> Result<Vec<f64>> {
        match &self.nets {
            Nets::Vrnn(n) => {
                let trace = n.forward(&self.params, seq, Sampling::Mean)?;
                Ok(trace
                    .steps
                    .iter()
                    .flat_map(|s| s.decoder.mu.iter().copied())
                    .collect())
            }
            _ => Err(Error::ArchitectureMismatch {
                expected: Architecture::VrnnNn.name(),
                found: self.config.arch.name(),
            }),
        }
    }
}

/// Free-function form of [`Model::features`].
pub fn extract_features(model: &Model, seq: &LabSequence) -> Result<Vec<f64>> {
    model.features(seq)
}

/// `x ⊙ mask` with exact zeros in masked cells.
pub(crate) fn masked_input(v: &MaskedVector) -> Vec<f64> {
    mask_values(&v.values, &v.mask)
}

pub(crate) fn mask_values(values: &[f64], mask: &[bool]) -> Vec<f64> {
    values
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { x } else { 0.0 })
        .collect()
}

/// `scale · (p − onehot(label))`, or zeros once `p[label]` is at the floor
/// where the clamped cross-entropy is flat.
pub(crate) fn ce_logit_grad(probs: &[f64], label: usize, scale: f64) -> Vec<f64> {
    if probs[label] < PROB_FLOOR {
        return vec![0.0; probs.len()];
    }
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| scale * (p - if k == label { 1.0 } else { 0.0 }))
        .collect()
}

pub(crate) fn arch_names() -> String {
    Architecture::ALL
        .iter()
        .map(|a| a.name())
        .collect::<Vec<_>>()
        .join(", ")
}

#[cfg(test)]
mod tests;
