use alloc::{format, string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::params::{glorot_uniform, Gradients, ParamId, ParamStore};
use super::tensor::Tensor;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer `y = act(W x + b)`, `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    weight: ParamId,
    bias: ParamId,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(rng, out_dim, in_dim),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                context: "dense input",
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let mut y = store.get(self.bias).data().to_vec();
        let w = store.get(self.weight);
        for (yi, row) in y.iter_mut().zip(w.data().chunks_exact(self.in_dim)) {
            *yi += super::tensor::dot(row, x);
            if self.activation == Activation::Relu && *yi <= 0.0 {
                *yi = 0.0;
            }
        }
        Ok(y)
    }

    /// Accumulates `dW`, `db` into `grads` and returns `dx`. `y` is the
    /// forward output; for ReLU the gradient passes where `y > 0`.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if dy.len() != self.out_dim || y.len() != self.out_dim {
            return Err(Error::ShapeMismatch {
                context: "dense output gradient",
                expected: self.out_dim,
                found: dy.len(),
            });
        }
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch {
                context: "dense input",
                expected: self.in_dim,
                found: x.len(),
            });
        }
        let dpre: Vec<f64> = match self.activation {
            Activation::Identity => dy.to_vec(),
            Activation::Relu => dy
                .iter()
                .zip(y)
                .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                .collect(),
        };
        grads.get_mut(self.weight).add_outer(&dpre, x);
        super::tensor::axpy(1.0, &dpre, grads.get_mut(self.bias).data_mut());
        let mut dx = vec![0.0; self.in_dim];
        store.get(self.weight).matvec_t_acc(&dpre, &mut dx);
        Ok(dx)
    }
}

/// One-hidden-layer network: `Dense(in→hidden, ReLU)` then
/// `Dense(hidden→out, identity)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForward {
    hidden: DenseLayer,
    output: DenseLayer,
}

/// Values kept from a [`FeedForward`] pass for its backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeedForwardTrace {
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Self {
        let hidden_name: String = format!("{name}.hidden");
        let out_name: String = format!("{name}.out");
        Self {
            hidden: DenseLayer::new(
                store,
                rng,
                &hidden_name,
                in_dim,
                hidden_dim,
                Activation::Relu,
            ),
            output: DenseLayer::new(
                store,
                rng,
                &out_name,
                hidden_dim,
                out_dim,
                Activation::Identity,
            ),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.output.out_dim()
    }

    pub fn layers(&self) -> [&DenseLayer; 2] {
        [&self.hidden, &self.output]
    }

    pub fn forward(&self, store: &ParamStore, x: Vec<f64>) -> Result<FeedForwardTrace> {
        let hidden = self.hidden.forward(store, &x)?;
        let output = self.output.forward(store, &hidden)?;
        Ok(FeedForwardTrace {
            input: x,
            hidden,
            output,
        })
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        trace: &FeedForwardTrace,
        dy: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        let dh = self
            .output
            .backward(store, &trace.hidden, &trace.output, dy, grads)?;
        self.hidden
            .backward(store, &trace.input, &trace.hidden, &dh, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GradCheckConfig};
    use crate::rng::stream;

    fn identity_layer(act: Activation) -> (ParamStore, DenseLayer) {
        let mut store = ParamStore::new();
        let mut rng = stream(&[0]);
        let layer = DenseLayer::new(&mut store, &mut rng, "d", 2, 2, act);
        store
            .get_mut(layer.weight())
            .data_mut()
            .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        (store, layer)
    }

    #[test]
    fn identity_map_and_relu() {
        let (store, layer) = identity_layer(Activation::Identity);
        assert_eq!(layer.forward(&store, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
        let (store, layer) = identity_layer(Activation::Relu);
        assert_eq!(layer.forward(&store, &[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn shape_mismatch_names_dims() {
        let (store, layer) = identity_layer(Activation::Identity);
        let err = layer.forward(&store, &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                context: "dense input",
                expected: 2,
                found: 3
            }
        );
    }

    #[test]
    fn random_layer_matches_finite_differences() {
        let mut store = ParamStore::new();
        let mut rng = stream(&[17]);
        let layer = DenseLayer::new(&mut store, &mut rng, "d", 4, 3, Activation::Identity);
        // non-zero bias so the check covers it meaningfully
        store
            .get_mut(layer.bias())
            .data_mut()
            .copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = [0.5, -1.0, 2.0, 0.25];
        let proj = [1.0, -2.0, 0.5];
        let loss = |s: &ParamStore| {
            let y = layer.forward(s, &x).unwrap();
            y.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * y.iter().map(|v| v * v).sum::<f64>()
        };
        let y = layer.forward(&store, &x).unwrap();
        let dy: Vec<f64> = y.iter().zip(&proj).map(|(a, b)| a + b).collect();
        let mut grads = store.zero_grads();
        let dx = layer.backward(&store, &x, &y, &dy, &mut grads).unwrap();

        let mut probe = store.clone();
        let report = grad_check(
            |flat| {
                probe.load_flat(flat).unwrap();
                loss(&probe)
            },
            &store.flatten(),
            &grads.flatten(),
            &GradCheckConfig::with_tolerance(1e-4),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checked, 15);

        // input gradient
        let report = grad_check(
            |xv| {
                let y = layer.forward(&store, xv).unwrap();
                y.iter().zip(&proj).map(|(a, b)| a * b).sum::<f64>()
                    + 0.5 * y.iter().map(|v| v * v).sum::<f64>()
            },
            &x,
            &dx,
            &GradCheckConfig::with_tolerance(1e-4),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn feedforward_gradients() {
        let mut store = ParamStore::new();
        let mut rng = stream(&[5]);
        let net = FeedForward::new(&mut store, &mut rng, "ff", 3, 6, 2);
        let x = vec![0.3, -0.7, 1.1];
        let loss = |s: &ParamStore| {
            let t = net.forward(s, x.clone()).unwrap();
            t.output[0] * 2.0 - t.output[1] * t.output[1]
        };
        let t = net.forward(&store, x.clone()).unwrap();
        let dy = [2.0, -2.0 * t.output[1]];
        let mut grads = store.zero_grads();
        net.backward(&store, &t, &dy, &mut grads).unwrap();
        let mut probe = store.clone();
        let report = grad_check(
            |flat| {
                probe.load_flat(flat).unwrap();
                loss(&probe)
            },
            &store.flatten(),
            &grads.flatten(),
            &GradCheckConfig::with_tolerance(1e-4),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }
}
