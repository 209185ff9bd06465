use alloc::{string::ToString, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamStore};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// Multiplicative decay applied once per epoch: `lr_e = lr · lr_decay^e`.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            lr_decay: 0.99,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.lr * libm::pow(self.lr_decay, epoch as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.len()])
            .collect();
        Self {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Moments are shaped like `params`.
    pub fn matches(&self, params: &ParamStore) -> bool {
        self.first_moment.len() == params.len()
            && self
                .first_moment
                .iter()
                .zip(params.tensors())
                .all(|(m, t)| m.len() == t.len())
    }

    /// One bias-corrected Adam update at the learning rate of `epoch`.
    /// A non-finite gradient leaves every parameter untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients, epoch: usize) -> Result<()> {
        if self.first_moment.len() != params.len() {
            return Err(Error::ShapeMismatch {
                context: "adam parameter blocks",
                expected: self.first_moment.len(),
                found: params.len(),
            });
        }
        for (name, g) in params.names().iter().zip(grads.tensors()) {
            if g.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NanGradient(name.to_string()));
            }
        }
        self.step += 1;
        let AdamConfig {
            beta1, beta2, eps, ..
        } = self.config;
        let lr = self.config.lr_at_epoch(epoch);
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        for (((p, g), m), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for (((pi, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *pi -= lr * m_hat / (libm::sqrt(v_hat) + eps);
            }
        }
        Ok(())
    }
}
