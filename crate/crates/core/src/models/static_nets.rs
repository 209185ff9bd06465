use alloc::vec::Vec;

use super::{ce_logit_grad, masked_input, LossParts, Model, ModelConfig, Nets, Sampling};
use crate::data::MaskedVector;
use crate::numcore::{softmax, FeedForward, FeedForwardTrace, Gradients, ParamStore};
use crate::problayer::{
    cross_entropy, kl_diag, kl_diag_backward, masked_gaussian_loglik,
    masked_gaussian_loglik_backward, mean_sample, reparameterize, reparameterize_backward,
    DiagGaussian, GaussianGrad, LatentSample,
};
use crate::rng::Rng;
use crate::{Error, Result};

pub(crate) type GradSink<'a> = Option<(&'a mut Gradients, f64)>;

fn check_dim(v: &MaskedVector, expected: usize) -> Result<()> {
    if v.dim() != expected || v.mask.len() != expected {
        return Err(Error::ShapeMismatch {
            context: "model input",
            expected,
            found: v.dim(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub(crate) struct NnNets {
    classifier: FeedForward,
}

impl NnNets {
    pub(crate) fn new(store: &mut ParamStore, rng: &mut Rng, m: usize, h: usize, c: usize) -> Self {
        Self {
            classifier: FeedForward::new(store, rng, "classifier", m, h, c),
        }
    }

    pub(crate) fn forward(
        &self,
        p: &ParamStore,
        v: &MaskedVector,
    ) -> Result<(FeedForwardTrace, Vec<f64>)> {
        check_dim(v, self.classifier.in_dim())?;
        let cls = self.classifier.forward(p, masked_input(v))?;
        let probs = softmax(&cls.output);
        Ok((cls, probs))
    }

    pub(crate) fn loss(
        &self,
        p: &ParamStore,
        cfg: &ModelConfig,
        v: &MaskedVector,
        label: usize,
        grad: GradSink<'_>,
    ) -> Result<LossParts> {
        let (cls, probs) = self.forward(p, v)?;
        let ce = cross_entropy(&probs, label)?;
        if let Some((grads, scale)) = grad {
            let dlogits = ce_logit_grad(&probs, label, scale * cfg.disc_weight);
            self.classifier.backward(p, &cls, &dlogits, grads)?;
        }
        Ok(LossParts::new(cfg, ce, 0.0, probs))
    }
}

#[derive(Clone, Debug)]
pub(crate) struct AeNets {
    encoder: FeedForward,
    decoder: FeedForward,
    classifier: FeedForward,
}

/// One AE+NN pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AeTrace {
    pub z: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub probs: Vec<f64>,
    encoder: FeedForwardTrace,
    decoder: FeedForwardTrace,
    classifier: FeedForwardTrace,
}

impl AeNets {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        m: usize,
        h: usize,
        l: usize,
        c: usize,
    ) -> Self {
        Self {
            encoder: FeedForward::new(store, rng, "encoder", m, h, l),
            decoder: FeedForward::new(store, rng, "decoder", l, h, m),
            classifier: FeedForward::new(store, rng, "classifier", l, h, c),
        }
    }

    pub(crate) fn forward(&self, p: &ParamStore, v: &MaskedVector) -> Result<AeTrace> {
        check_dim(v, self.encoder.in_dim())?;
        let encoder = self.encoder.forward(p, masked_input(v))?;
        let z = encoder.output.clone();
        let decoder = self.decoder.forward(p, z.clone())?;
        let classifier = self.classifier.forward(p, z.clone())?;
        Ok(AeTrace {
            z,
            reconstruction: decoder.output.clone(),
            probs: softmax(&classifier.output),
            encoder,
            decoder,
            classifier,
        })
    }

    pub(crate) fn loss(
        &self,
        p: &ParamStore,
        cfg: &ModelConfig,
        v: &MaskedVector,
        label: usize,
        grad: GradSink<'_>,
    ) -> Result<LossParts> {
        let trace = self.forward(p, v)?;
        let parts = ae_loss_from(&trace, v, label, cfg)?;
        if let Some((grads, scale)) = grad {
            let dlogits = ce_logit_grad(&trace.probs, label, scale * cfg.disc_weight);
            let mut dz = self
                .classifier
                .backward(p, &trace.classifier, &dlogits, grads)?;
            if cfg.eta != 0.0 {
                let k = 2.0 * scale * cfg.eta;
                let dxhat: Vec<f64> = (0..v.dim())
                    .map(|m| {
                        if v.mask[m] {
                            k * (trace.reconstruction[m] - v.values[m])
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let dz_dec = self.decoder.backward(p, &trace.decoder, &dxhat, grads)?;
                dz.iter_mut().zip(&dz_dec).for_each(|(a, b)| *a += b);
            }
            self.encoder.backward(p, &trace.encoder, &dz, grads)?;
        }
        Ok(parts)
    }
}

fn ae_loss_from(
    trace: &AeTrace,
    v: &MaskedVector,
    label: usize,
    cfg: &ModelConfig,
) -> Result<LossParts> {
    let ce = cross_entropy(&trace.probs, label)?;
    let se: f64 = (0..v.dim())
        .filter(|&m| v.mask[m])
        .map(|m| {
            let r = v.values[m] - trace.reconstruction[m];
            r * r
        })
        .sum();
    Ok(LossParts::new(cfg, ce, se, trace.probs.clone()))
}

#[derive(Clone, Debug)]
pub(crate) struct VaeNets {
    encoder: FeedForward,
    decoder: FeedForward,
    classifier: FeedForward,
}

/// One VAE+NN pass. The classifier reads `q.mu`; the decoder reads `sample`.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeTrace {
    pub q: DiagGaussian,
    pub sample: LatentSample,
    pub decoder_dist: DiagGaussian,
    pub probs: Vec<f64>,
    encoder: FeedForwardTrace,
    decoder: FeedForwardTrace,
    classifier: FeedForwardTrace,
}

impl VaeNets {
    pub(crate) fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        m: usize,
        h: usize,
        l: usize,
        c: usize,
    ) -> Self {
        Self {
            encoder: FeedForward::new(store, rng, "encoder", m, h, 2 * l),
            decoder: FeedForward::new(store, rng, "decoder", l, h, 2 * m),
            classifier: FeedForward::new(store, rng, "classifier", l, h, c),
        }
    }

    pub(crate) fn forward(
        &self,
        p: &ParamStore,
        v: &MaskedVector,
        sampling: Sampling,
    ) -> Result<VaeTrace> {
        check_dim(v, self.encoder.in_dim())?;
        let encoder = self.encoder.forward(p, masked_input(v))?;
        let q = DiagGaussian::from_raw(&encoder.output);
        let sample = match sampling.rng() {
            Some(mut rng) => reparameterize(&q, &mut rng),
            None => mean_sample(&q),
        };
        let decoder = self.decoder.forward(p, sample.z.clone())?;
        let decoder_dist = DiagGaussian::from_raw(&decoder.output);
        let classifier = self.classifier.forward(p, q.mu.clone())?;
        Ok(VaeTrace {
            q,
            sample,
            decoder_dist,
            probs: softmax(&classifier.output),
            encoder,
            decoder,
            classifier,
        })
    }

    pub(crate) fn loss(
        &self,
        p: &ParamStore,
        cfg: &ModelConfig,
        v: &MaskedVector,
        label: usize,
        sampling: Sampling,
        grad: GradSink<'_>,
    ) -> Result<LossParts> {
        let trace = self.forward(p, v, sampling)?;
        let parts = vae_loss_from(&trace, v, label, cfg)?;
        if let Some((grads, scale)) = grad {
            let dlogits = ce_logit_grad(&trace.probs, label, scale * cfg.disc_weight);
            let dmu = self
                .classifier
                .backward(p, &trace.classifier, &dlogits, grads)?;
            let l = trace.q.dim();
            let mut gq = GaussianGrad::zeros(l);
            gq.mu.copy_from_slice(&dmu);
            if cfg.eta != 0.0 {
                let k = scale * cfg.eta;
                let x = masked_input(v);
                let mut gx = GaussianGrad::zeros(v.dim());
                masked_gaussian_loglik_backward(&x, &v.mask, &trace.decoder_dist, -k, &mut gx);
                let draw = trace.decoder_dist.raw_grad(&trace.decoder.output, &gx);
                let dz = self.decoder.backward(p, &trace.decoder, &draw, grads)?;
                reparameterize_backward(&trace.sample, &dz, &mut gq);
                kl_diag_backward(&trace.q, &DiagGaussian::standard(l), k, &mut gq, None)?;
            }
            let draw = trace.q.raw_grad(&trace.encoder.output, &gq);
            self.encoder.backward(p, &trace.encoder, &draw, grads)?;
        }
        Ok(parts)
    }
}

fn vae_loss_from(
    trace: &VaeTrace,
    v: &MaskedVector,
    label: usize,
    cfg: &ModelConfig,
) -> Result<LossParts> {
    let ce = cross_entropy(&trace.probs, label)?;
    let kl = kl_diag(&trace.q, &DiagGaussian::standard(trace.q.dim()))?;
    let ll = masked_gaussian_loglik(&masked_input(v), &v.mask, &trace.decoder_dist);
    Ok(LossParts::new(cfg, ce, kl - ll, trace.probs.clone()))
}

fn mismatch(expected: &'static str, model: &Model) -> Error {
    Error::ArchitectureMismatch {
        expected,
        found: model.arch().name(),
    }
}

/// Class probabilities of an NN model on an averaged, zero-filled vector.
pub fn nn_forward(model: &Model, v: &MaskedVector) -> Result<Vec<f64>> {
    match model.nets() {
        Nets::Nn(n) => n.forward(model.params(), v).map(|t| t.1),
        _ => Err(mismatch("nn", model)),
    }
}

pub fn ae_forward(model: &Model, v: &MaskedVector) -> Result<AeTrace> {
    match model.nets() {
        Nets::Ae(n) => n.forward(model.params(), v),
        _ => Err(mismatch("ae_nn", model)),
    }
}

/// `CE + η · Σ_observed (x − x̂)²`.
pub fn ae_loss(
    trace: &AeTrace,
    v: &MaskedVector,
    label: usize,
    cfg: &ModelConfig,
) -> Result<LossParts> {
    ae_loss_from(trace, v, label, cfg)
}

pub fn vae_forward(model: &Model, v: &MaskedVector, sampling: Sampling) -> Result<VaeTrace> {
    match model.nets() {
        Nets::Vae(n) => n.forward(model.params(), v, sampling),
        _ => Err(mismatch("vae_nn", model)),
    }
}

/// `CE + η · (KL(q ‖ 𝒩(0, I)) − Σ_observed log p(x | z))`.
pub fn vae_loss(
    trace: &VaeTrace,
    v: &MaskedVector,
    label: usize,
    cfg: &ModelConfig,
) -> Result<LossParts> {
    vae_loss_from(trace, v, label, cfg)
}
