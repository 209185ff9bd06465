use alloc::{vec, vec::Vec};

use super::static_nets::GradSink;
use super::{ce_logit_grad, mask_values, LossParts, Model, ModelConfig, Nets, Sampling};
use crate::data::LabSequence;
use crate::numcore::{softmax, FeedForward, FeedForwardTrace, LstmCell, LstmStep, ParamStore};
use crate::problayer::{
    cross_entropy, kl_diag, kl_diag_backward, masked_gaussian_loglik,
    masked_gaussian_loglik_backward, mean_sample, reparameterize, reparameterize_backward,
    DiagGaussian, GaussianGrad, LatentSample,
};
use crate::rng::Rng;
use crate::{Error, Result};

fn check_seq(seq: &LabSequence, m: usize) -> Result<()> {
    if seq.tests() != m {
        return Err(Error::ShapeMismatch {
            context: "sequence tests",
            expected: m,
            found: seq.tests(),
        });
    }
    if seq.days() == 0 {
        return Err(Error::InvalidSequence("sequence has no days".into()));
    }
    Ok(())
}

fn mean_of(states: impl Iterator<Item = impl AsRef<[f64]>>, dim: usize, count: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for h in states {
        acc.iter_mut().zip(h.as_ref()).for_each(|(a, b)| *a += b);
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    acc
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

#[derive(Clone, Debug)]
pub(crate) struct RnnNets {
    lstm: LstmCell,
    classifier: FeedForward,
}

/// One RNN+NN pass over all days.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnTrace {
    pub steps: Vec<LstmStep>,
    /// `h̃`, the mean of `h₁ … h_T`.
    pub pooled: Vec<f64>,
    pub probs: Vec<f64>,
    classifier: FeedForwardTrace,
}

impl RnnNets {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut Rng, m: usize, h: usize, c: usize) -> Self {
        Self {
            lstm: LstmCell::new(store, rng, "lstm", m, h),
            classifier: FeedForward::new(store, rng, "classifier", h, h, c),
        }
    }

    pub(crate) fn forward(&self, p: &ParamStore, seq: &LabSequence) -> Result<RnnTrace> {
        check_seq(seq, self.lstm.input_dim())?;
        let hd = self.lstm.hidden_dim();
        let mut steps: Vec<LstmStep> = Vec::with_capacity(seq.days());
        for t in 0..seq.days() {
            let x = mask_values(seq.row(t), seq.mask_row(t));
            let zeros = vec![0.0; hd];
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.h, &s.c),
                None => (&zeros, &zeros),
            };
            let step = self.lstm.forward(p, &x, h_prev, c_prev)?;
            steps.push(step);
        }
        let pooled = mean_of(steps.iter().map(|s| &s.h), hd, steps.len());
        let classifier = self.classifier.forward(p, pooled.clone())?;
        Ok(RnnTrace {
            steps,
            pooled,
            probs: softmax(&classifier.output),
            classifier,
        })
    }

    pub(crate) fn loss(
        &self,
        p: &ParamStore,
        cfg: &ModelConfig,
        seq: &LabSequence,
        grad: GradSink<'_>,
    ) -> Result<LossParts> {
        let trace = self.forward(p, seq)?;
        let ce = cross_entropy(&trace.probs, seq.label)?;
        if let Some((grads, scale)) = grad {
            let dlogits = ce_logit_grad(&trace.probs, seq.label, scale * cfg.disc_weight);
            let dpooled = self
                .classifier
                .backward(p, &trace.classifier, &dlogits, grads)?;
            let hd = self.lstm.hidden_dim();
            let inv = 1.0 / trace.steps.len() as f64;
            let mut dh_next = vec![0.0; hd];
            let mut dc_next = vec![0.0; hd];
            for step in trace.steps.iter().rev() {
                let mut dh = dh_next;
                dh.iter_mut().zip(&dpooled).for_each(|(a, b)| *a += b * inv);
                let (_, dh_prev, dc_prev) = self.lstm.backward(p, step, &dh, &dc_next, grads)?;
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        }
        Ok(LossParts::new(cfg, ce, 0.0, trace.probs))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct VrnnNets {
    prior: FeedForward,
    encoder: FeedForward,
    decoder: FeedForward,
    lstm: LstmCell,
    classifier: FeedForward,
}

/// One VRNN time step.
#[derive(Clone, Debug, PartialEq)]
pub struct VrnnStep {
    /// `p(z_t | h_{t−1})`.
    pub prior: DiagGaussian,
    /// `q(z_t | x_t, h_{t−1})`.
    pub posterior: DiagGaussian,
    /// `p(x_t | z_t, h_{t−1})`.
    pub decoder: DiagGaussian,
    pub sample: LatentSample,
    pub lstm: LstmStep,
    prior_trace: FeedForwardTrace,
    encoder_trace: FeedForwardTrace,
    decoder_trace: FeedForwardTrace,
}

impl VrnnStep {
    pub fn h(&self) -> &[f64] {
        &self.lstm.h
    }
}

/// One VRNN+NN pass over all days.
#[derive(Clone, Debug, PartialEq)]
pub struct VrnnTrace {
    pub steps: Vec<VrnnStep>,
    pub pooled: Vec<f64>,
    pub probs: Vec<f64>,
    classifier: FeedForwardTrace,
}

impl VrnnNets {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        m: usize,
        h: usize,
        l: usize,
        c: usize,
    ) -> Self {
        Self {
            prior: FeedForward::new(store, rng, "prior", h, h, 2 * l),
            encoder: FeedForward::new(store, rng, "encoder", m + h, h, 2 * l),
            decoder: FeedForward::new(store, rng, "decoder", l + h, h, 2 * m),
            lstm: LstmCell::new(store, rng, "lstm", m + l, h),
            classifier: FeedForward::new(store, rng, "classifier", h, h, c),
        }
    }

    fn input_dim(&self) -> usize {
        self.decoder.out_dim() / 2
    }

    pub(crate) fn step(
        &self,
        p: &ParamStore,
        x: &[f64],
        mask: &[bool],
        h_prev: &[f64],
        c_prev: &[f64],
        rng: Option<&mut Rng>,
    ) -> Result<VrnnStep> {
        let x = mask_values(x, mask);
        let prior_trace = self.prior.forward(p, h_prev.to_vec())?;
        let prior = DiagGaussian::from_raw(&prior_trace.output);
        let mut enc_in = x.clone();
        enc_in.extend_from_slice(h_prev);
        let encoder_trace = self.encoder.forward(p, enc_in)?;
        let posterior = DiagGaussian::from_raw(&encoder_trace.output);
        let sample = match rng {
            Some(rng) => reparameterize(&posterior, rng),
            None => mean_sample(&posterior),
        };
        let mut dec_in = sample.z.clone();
        dec_in.extend_from_slice(h_prev);
        let decoder_trace = self.decoder.forward(p, dec_in)?;
        let decoder = DiagGaussian::from_raw(&decoder_trace.output);
        let mut lstm_in = x;
        lstm_in.extend_from_slice(&sample.z);
        let lstm = self.lstm.forward(p, &lstm_in, h_prev, c_prev)?;
        Ok(VrnnStep {
            prior,
            posterior,
            decoder,
            sample,
            lstm,
            prior_trace,
            encoder_trace,
            decoder_trace,
        })
    }

    pub(crate) fn forward(
        &self,
        p: &ParamStore,
        seq: &LabSequence,
        sampling: Sampling,
    ) -> Result<VrnnTrace> {
        check_seq(seq, self.input_dim())?;
        let hd = self.lstm.hidden_dim();
        let mut rng = sampling.rng();
        let zeros = vec![0.0; hd];
        let mut steps: Vec<VrnnStep> = Vec::with_capacity(seq.days());
        for t in 0..seq.days() {
            let (h_prev, c_prev) = match steps.last() {
                Some(s) => (&s.lstm.h, &s.lstm.c),
                None => (&zeros, &zeros),
            };
            let step = self.step(p, seq.row(t), seq.mask_row(t), h_prev, c_prev, rng.as_mut())?;
            steps.push(step);
        }
        let pooled = mean_of(steps.iter().map(|s| &s.lstm.h), hd, steps.len());
        let classifier = self.classifier.forward(p, pooled.clone())?;
        Ok(VrnnTrace {
            steps,
            pooled,
            probs: softmax(&classifier.output),
            classifier,
        })
    }

    pub(crate) fn loss(
        &self,
        p: &ParamStore,
        cfg: &ModelConfig,
        seq: &LabSequence,
        sampling: Sampling,
        grad: GradSink<'_>,
    ) -> Result<LossParts> {
        let trace = self.forward(p, seq, sampling)?;
        let parts = vrnn_loss_from(&trace, seq, cfg)?;
        let Some((grads, scale)) = grad else {
            return Ok(parts);
        };
        let (m, hd) = (self.input_dim(), self.lstm.hidden_dim());
        let l = self.prior.out_dim() / 2;
        let k = scale * cfg.eta;
        let dlogits = ce_logit_grad(&trace.probs, seq.label, scale * cfg.disc_weight);
        let dpooled = self
            .classifier
            .backward(p, &trace.classifier, &dlogits, grads)?;
        let inv = 1.0 / trace.steps.len() as f64;
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let mut dh = dh_next;
            dh.iter_mut().zip(&dpooled).for_each(|(a, b)| *a += b * inv);
            let (dlstm_in, mut dh_prev, dc_prev) =
                self.lstm.backward(p, &step.lstm, &dh, &dc_next, grads)?;
            let mut dz = dlstm_in[m..].to_vec();

            let mut gq = GaussianGrad::zeros(l);
            let mut gp = GaussianGrad::zeros(l);
            if k != 0.0 {
                let x = mask_values(seq.row(t), seq.mask_row(t));
                let mut gx = GaussianGrad::zeros(m);
                masked_gaussian_loglik_backward(&x, seq.mask_row(t), &step.decoder, -k, &mut gx);
                let draw = step.decoder.raw_grad(&step.decoder_trace.output, &gx);
                let ddec_in = self
                    .decoder
                    .backward(p, &step.decoder_trace, &draw, grads)?;
                add_into(&mut dz, &ddec_in[..l]);
                add_into(&mut dh_prev, &ddec_in[l..]);
                kl_diag_backward(&step.posterior, &step.prior, k, &mut gq, Some(&mut gp))?;
            }
            reparameterize_backward(&step.sample, &dz, &mut gq);
            let draw = step.posterior.raw_grad(&step.encoder_trace.output, &gq);
            let denc_in = self
                .encoder
                .backward(p, &step.encoder_trace, &draw, grads)?;
            add_into(&mut dh_prev, &denc_in[m..]);
            if k != 0.0 {
                let draw = step.prior.raw_grad(&step.prior_trace.output, &gp);
                let dprior_in = self.prior.backward(p, &step.prior_trace, &draw, grads)?;
                add_into(&mut dh_prev, &dprior_in);
            }
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok(parts)
    }
}

fn vrnn_loss_from(trace: &VrnnTrace, seq: &LabSequence, cfg: &ModelConfig) -> Result<LossParts> {
    let ce = cross_entropy(&trace.probs, seq.label)?;
    let mut gen = 0.0;
    for (t, step) in trace.steps.iter().enumerate() {
        let x = mask_values(seq.row(t), seq.mask_row(t));
        gen += kl_diag(&step.posterior, &step.prior)?
            - masked_gaussian_loglik(&x, seq.mask_row(t), &step.decoder);
    }
    Ok(LossParts::new(cfg, ce, gen, trace.probs.clone()))
}

fn vrnn_nets(model: &Model) -> Result<&VrnnNets> {
    match model.nets() {
        Nets::Vrnn(n) => Ok(n),
        _ => Err(Error::ArchitectureMismatch {
            expected: "vrnn_nn",
            found: model.arch().name(),
        }),
    }
}

pub fn rnn_forward(model: &Model, seq: &LabSequence) -> Result<RnnTrace> {
    match model.nets() {
        Nets::Rnn(n) => n.forward(model.params(), seq),
        _ => Err(Error::ArchitectureMismatch {
            expected: "rnn_nn",
            found: model.arch().name(),
        }),
    }
}

/// One recurrence step from `(h_{t−1}, c_{t−1})`. `rng` draws `z_t`; `None`
/// uses the posterior mean.
pub fn vrnn_step(
    model: &Model,
    x: &[f64],
    mask: &[bool],
    h_prev: &[f64],
    c_prev: &[f64],
    rng: Option<&mut Rng>,
) -> Result<VrnnStep> {
    let nets = vrnn_nets(model)?;
    if x.len() != nets.input_dim() || mask.len() != x.len() {
        return Err(Error::ShapeMismatch {
            context: "vrnn step input",
            expected: nets.input_dim(),
            found: x.len(),
        });
    }
    nets.step(model.params(), x, mask, h_prev, c_prev, rng)
}

pub fn vrnn_forward(model: &Model, seq: &LabSequence, sampling: Sampling) -> Result<VrnnTrace> {
    vrnn_nets(model)?.forward(model.params(), seq, sampling)
}

/// `CE + η · Σ_t (KL(q_t ‖ p_t) − Σ_observed log p(x_t | z_t))`.
pub fn vrnn_loss(trace: &VrnnTrace, seq: &LabSequence, cfg: &ModelConfig) -> Result<LossParts> {
    if trace.steps.len() != seq.days() {
        return Err(Error::LengthMismatch {
            left: trace.steps.len(),
            right: seq.days(),
        });
    }
    vrnn_loss_from(trace, seq, cfg)
}
