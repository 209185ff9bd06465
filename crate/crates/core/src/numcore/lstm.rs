use alloc::{format, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::activation::sigmoid;
use super::params::{glorot_uniform, Gradients, ParamId, ParamStore};
use super::tensor::{axpy, dot, Tensor};
use crate::rng::Rng;
use crate::{Error, Result};

/// LSTM cell over the concatenation `[input, h_prev]`.
///
/// Gate rows are stacked in the order input, forget, output, candidate,
/// each block `hidden` rows tall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    weight: ParamId,
    bias: ParamId,
    input_dim: usize,
    hidden_dim: usize,
}

/// Forward results of one step plus what the backward pass needs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LstmStep {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    concat: Vec<f64>,
    /// Post-activation gates `[i, f, o, g]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    /// Glorot weights, zero biases except the forget gate at +1.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            glorot_uniform(rng, 4 * hidden_dim, input_dim + hidden_dim),
        );
        let mut b = Tensor::zeros(&[4 * hidden_dim]);
        b.data_mut()[hidden_dim..2 * hidden_dim]
            .iter_mut()
            .for_each(|v| *v = 1.0);
        let bias = store.add(format!("{name}.bias"), b);
        Self {
            weight,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
    ) -> Result<LstmStep> {
        let hd = self.hidden_dim;
        for (context, expected, found) in [
            ("lstm input", self.input_dim, x.len()),
            ("lstm hidden state", hd, h_prev.len()),
            ("lstm cell state", hd, c_prev.len()),
        ] {
            if expected != found {
                return Err(Error::ShapeMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        let mut concat = Vec::with_capacity(self.input_dim + hd);
        concat.extend_from_slice(x);
        concat.extend_from_slice(h_prev);

        let w = store.get(self.weight);
        let cols = self.input_dim + hd;
        let mut gates = store.get(self.bias).data().to_vec();
        for (a, row) in gates.iter_mut().zip(w.data().chunks_exact(cols)) {
            *a += dot(row, &concat);
        }
        for (k, a) in gates.iter_mut().enumerate() {
            *a = if k < 3 * hd {
                sigmoid(*a)
            } else {
                libm::tanh(*a)
            };
        }
        let mut c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, o, g) = (
                gates[j],
                gates[hd + j],
                gates[2 * hd + j],
                gates[3 * hd + j],
            );
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = libm::tanh(c[j]);
            h[j] = o * tanh_c[j];
        }
        Ok(LstmStep {
            h,
            c,
            concat,
            gates,
            c_prev: c_prev.to_vec(),
            tanh_c,
        })
    }

    /// Backward through one step given upstream `dh`, `dc`. Accumulates
    /// weight and bias gradients; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        step: &LstmStep,
        dh: &[f64],
        dc: &[f64],
        grads: &mut Gradients,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let hd = self.hidden_dim;
        if dh.len() != hd || dc.len() != hd {
            return Err(Error::ShapeMismatch {
                context: "lstm state gradient",
                expected: hd,
                found: dh.len().max(dc.len()),
            });
        }
        let g = &step.gates;
        let mut dpre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, o, gg) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
            let tc = step.tanh_c[j];
            let d_o = dh[j] * tc;
            let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
            let d_i = dct * gg;
            let d_g = dct * i;
            let d_f = dct * step.c_prev[j];
            dc_prev[j] = dct * f;
            dpre[j] = d_i * i * (1.0 - i);
            dpre[hd + j] = d_f * f * (1.0 - f);
            dpre[2 * hd + j] = d_o * o * (1.0 - o);
            dpre[3 * hd + j] = d_g * (1.0 - gg * gg);
        }
        grads.get_mut(self.weight).add_outer(&dpre, &step.concat);
        axpy(1.0, &dpre, grads.get_mut(self.bias).data_mut());
        let mut dconcat = vec![0.0; self.input_dim + hd];
        store.get(self.weight).matvec_t_acc(&dpre, &mut dconcat);
        let dh_prev = dconcat.split_off(self.input_dim);
        Ok((dconcat, dh_prev, dc_prev))
    }
}
