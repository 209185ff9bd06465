//! Diagonal Gaussians and the likelihood terms built on them.
//!
//! Networks emit `[μ, log σ]`; [`DiagGaussian::from_raw`] clamps `log σ` to
//! `[-7, 7]` before exponentiating, so every σ lies in `[e⁻⁷, e⁷]`.

use alloc::{vec, vec::Vec};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

pub const LOG_SIGMA_MIN: f64 = -7.0;
pub const LOG_SIGMA_MAX: f64 = 7.0;
pub const PROB_FLOOR: f64 = 1e-12;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Gradient of a scalar with respect to a [`DiagGaussian`]'s parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianGrad {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![0.0; dim],
        }
    }
}

impl DiagGaussian {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::LengthMismatch {
                left: mu.len(),
                right: sigma.len(),
            });
        }
        if sigma
            .iter()
            .any(|s| s.is_nan() || *s <= 0.0 || s.is_infinite())
        {
            return Err(Error::NonFinite("gaussian sigma must be positive".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Splits a `2D` network output into `μ` and a clamped `σ = exp(log σ)`.
    pub fn from_raw(raw: &[f64]) -> Self {
        let d = raw.len() / 2;
        let mu = raw[..d].to_vec();
        let sigma = raw[d..]
            .iter()
            .map(|&l| libm::exp(l.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)))
            .collect();
        Self { mu, sigma }
    }

    /// Maps a gradient on `(μ, σ)` back to the raw `[μ, log σ]` output.
    /// The clamp passes no gradient outside `[-7, 7]`.
    pub fn raw_grad(&self, raw: &[f64], grad: &GaussianGrad) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(2 * d);
        out.extend_from_slice(&grad.mu);
        for j in 0..d {
            let l = raw[d + j];
            let inside = (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&l);
            out.push(if inside {
                grad.sigma[j] * self.sigma[j]
            } else {
                0.0
            });
        }
        out
    }
}

/// `KL(q ‖ p)` in closed form.
pub fn kl_diag(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    check_dims(q, p)?;
    Ok(q.mu
        .iter()
        .zip(&q.sigma)
        .zip(p.mu.iter().zip(&p.sigma))
        .map(|((&mq, &sq), (&mp, &sp))| kl_term(mq, sq, mp, sp))
        .sum())
}

#[inline]
fn kl_term(mq: f64, sq: f64, mp: f64, sp: f64) -> f64 {
    let d = mq - mp;
    libm::log(sp / sq) + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5
}

/// `KL(q ‖ p)` together with its gradients scaled by `scale`, accumulated
/// into `dq` and `dp`.
pub fn kl_diag_backward(
    q: &DiagGaussian,
    p: &DiagGaussian,
    scale: f64,
    dq: &mut GaussianGrad,
    dp: Option<&mut GaussianGrad>,
) -> Result<f64> {
    check_dims(q, p)?;
    let mut total = 0.0;
    let mut dp = dp;
    for j in 0..q.dim() {
        let (mq, sq, mp, sp) = (q.mu[j], q.sigma[j], p.mu[j], p.sigma[j]);
        total += kl_term(mq, sq, mp, sp);
        let d = mq - mp;
        let sp2 = sp * sp;
        dq.mu[j] += scale * d / sp2;
        dq.sigma[j] += scale * (-1.0 / sq + sq / sp2);
        if let Some(dp) = dp.as_deref_mut() {
            dp.mu[j] -= scale * d / sp2;
            dp.sigma[j] += scale * (1.0 / sp - (sq * sq + d * d) / (sp2 * sp));
        }
    }
    Ok(total)
}

fn check_dims(q: &DiagGaussian, p: &DiagGaussian) -> Result<()> {
    if q.dim() != p.dim() {
        return Err(Error::ShapeMismatch {
            context: "kl divergence",
            expected: q.dim(),
            found: p.dim(),
        });
    }
    Ok(())
}

/// A reparameterized draw `z = μ + σ ⊙ ε`, keeping `ε` for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn reparameterize(g: &DiagGaussian, rng: &mut Rng) -> LatentSample {
    let noise: Vec<f64> = (0..g.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let z =
        g.mu.iter()
            .zip(&g.sigma)
            .zip(&noise)
            .map(|((m, s), e)| m + s * e)
            .collect();
    LatentSample { z, noise }
}

/// The posterior mean used in place of a sample at evaluation time.
pub fn mean_sample(g: &DiagGaussian) -> LatentSample {
    LatentSample {
        z: g.mu.clone(),
        noise: vec![0.0; g.dim()],
    }
}

/// Routes `dz` back to `μ` and `σ` through `z = μ + σ ⊙ ε`.
pub fn reparameterize_backward(sample: &LatentSample, dz: &[f64], grad: &mut GaussianGrad) {
    for (j, &d) in dz.iter().enumerate() {
        grad.mu[j] += d;
        grad.sigma[j] += d * sample.noise[j];
    }
}

/// `Σ_{m observed} log 𝒩(x_m; μ_m, σ_m²)`. Unobserved coordinates do not
/// enter the sum, whatever `x` holds there.
pub fn masked_gaussian_loglik(x: &[f64], mask: &[bool], g: &DiagGaussian) -> f64 {
    let mut total = 0.0;
    for m in 0..g.dim() {
        if mask[m] {
            let r = (x[m] - g.mu[m]) / g.sigma[m];
            total += -HALF_LN_2PI - libm::log(g.sigma[m]) - 0.5 * r * r;
        }
    }
    total
}

/// Value of [`masked_gaussian_loglik`]; accumulates `scale ·` its gradient
/// with respect to `g` into `grad`.
pub fn masked_gaussian_loglik_backward(
    x: &[f64],
    mask: &[bool],
    g: &DiagGaussian,
    scale: f64,
    grad: &mut GaussianGrad,
) -> f64 {
    let mut total = 0.0;
    for m in 0..g.dim() {
        if mask[m] {
            let s = g.sigma[m];
            let diff = x[m] - g.mu[m];
            let r = diff / s;
            total += -HALF_LN_2PI - libm::log(s) - 0.5 * r * r;
            grad.mu[m] += scale * diff / (s * s);
            grad.sigma[m] += scale * (-1.0 / s + diff * diff / (s * s * s));
        }
    }
    total
}

/// `−ln max(p[label], 1e-12)`; a NaN probability yields a NaN loss.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::InvalidLabel {
        label,
        classes: probs.len(),
    })?;
    let p = if *p < PROB_FLOOR { PROB_FLOOR } else { *p };
    Ok(-libm::log(p))
}

/// Softmax + cross-entropy from logits. Returns `(loss, probs, dlogits)`
/// where `dlogits` is the gradient scaled by `scale`.
pub fn softmax_cross_entropy(
    logits: &[f64],
    label: usize,
    scale: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let probs = crate::numcore::softmax(logits);
    let loss = cross_entropy(&probs, label)?;
    let dlogits = if probs[label] < PROB_FLOOR {
        vec![0.0; probs.len()]
    } else {
        probs
            .iter()
            .enumerate()
            .map(|(k, &p)| scale * (p - if k == label { 1.0 } else { 0.0 }))
            .collect()
    };
    Ok((loss, probs, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, GradCheckConfig};
    use crate::rng::stream;
    use proptest::prelude::*;

    fn g1(mu: f64, sigma: f64) -> DiagGaussian {
        DiagGaussian::new(vec![mu], vec![sigma]).unwrap()
    }

    #[test]
    fn cross_entropy_keeps_nan_visible() {
        assert!(cross_entropy(&[f64::NAN, 0.5], 0).unwrap().is_nan());
        assert_eq!(
            cross_entropy(&[0.0, 1.0], 0).unwrap(),
            -libm::log(PROB_FLOOR)
        );
    }

    #[test]
    fn kl_fixtures() {
        assert_eq!(kl_diag(&g1(0.0, 1.0), &g1(0.0, 1.0)).unwrap(), 0.0);
        assert!((kl_diag(&g1(1.0, 1.0), &g1(0.0, 1.0)).unwrap() - 0.5).abs() < 1e-12);
        let expected = 0.5 * (4.0 - 1.0 - libm::log(4.0));
        let kl = kl_diag(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap();
        assert!((kl - expected).abs() < 1e-12);
        assert!((kl - 0.80685).abs() < 1e-5);
    }

    #[test]
    fn kl_rejects_dimension_mismatch() {
        assert!(matches!(
            kl_diag(&DiagGaussian::standard(2), &DiagGaussian::standard(3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let q = DiagGaussian::new(vec![0.3, -1.0], vec![0.7, 1.9]).unwrap();
        let p = DiagGaussian::new(vec![-0.2, 0.5], vec![1.3, 0.4]).unwrap();
        let mut dq = GaussianGrad::zeros(2);
        let mut dp = GaussianGrad::zeros(2);
        kl_diag_backward(&q, &p, 1.0, &mut dq, Some(&mut dp)).unwrap();
        let pack = |q: &DiagGaussian, p: &DiagGaussian| {
            [q.mu.clone(), q.sigma.clone(), p.mu.clone(), p.sigma.clone()].concat()
        };
        let analytic = [dq.mu, dq.sigma, dp.mu, dp.sigma].concat();
        let r = grad_check(
            |v| {
                let q = DiagGaussian::new(v[0..2].to_vec(), v[2..4].to_vec()).unwrap();
                let p = DiagGaussian::new(v[4..6].to_vec(), v[6..8].to_vec()).unwrap();
                kl_diag(&q, &p).unwrap()
            },
            &pack(&q, &p),
            &analytic,
            &GradCheckConfig::with_tolerance(1e-6),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn loglik_fixtures() {
        let g = DiagGaussian::standard(1);
        assert!((masked_gaussian_loglik(&[0.0], &[true], &g) + 0.91894).abs() < 1e-5);
        let g = DiagGaussian::standard(3);
        assert_eq!(
            masked_gaussian_loglik(&[1.0, 2.0, 3.0], &[false; 3], &g),
            0.0
        );
    }

    #[test]
    fn loglik_ignores_masked_content() {
        let g = DiagGaussian::new(vec![0.1, 0.2, 0.3], vec![0.5, 1.0, 2.0]).unwrap();
        let mask = [true, false, true];
        let a = [1.0, 2.0, 3.0];
        let b = [1.0, -1e300, 3.0];
        assert_eq!(
            masked_gaussian_loglik(&a, &mask, &g).to_bits(),
            masked_gaussian_loglik(&b, &mask, &g).to_bits()
        );
        let (mut ga, mut gb) = (GaussianGrad::zeros(3), GaussianGrad::zeros(3));
        masked_gaussian_loglik_backward(&a, &mask, &g, 1.0, &mut ga);
        masked_gaussian_loglik_backward(&b, &mask, &g, 1.0, &mut gb);
        assert_eq!(ga, gb);
        assert_eq!(ga.mu[1], 0.0);
        assert_eq!(ga.sigma[1], 0.0);
    }

    #[test]
    fn reparameterize_is_seeded_and_floor_collapses_to_mean() {
        let g = DiagGaussian::from_raw(&[1.5, -2.0, -50.0, -50.0]);
        assert!(g.sigma.iter().all(|&s| s == libm::exp(-7.0)));
        let a = reparameterize(&g, &mut stream(&[3]));
        let b = reparameterize(&g, &mut stream(&[3]));
        assert_eq!(a, b);
        for ((z, m), e) in a.z.iter().zip(&g.mu).zip(&a.noise) {
            assert!((z - m).abs() <= libm::exp(-7.0) * e.abs() + 1e-15);
        }
    }

    #[test]
    fn reparameterize_monte_carlo_moments() {
        let g = DiagGaussian::standard(1);
        let mut rng = stream(&[11]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| reparameterize(&g, &mut rng).z[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((0.99..=1.01).contains(&sd), "sd {sd}");
    }

    #[test]
    fn reparameterize_gradient_wrt_mu_is_identity() {
        let g = DiagGaussian::new(vec![0.0, 1.0], vec![0.5, 2.0]).unwrap();
        let s = reparameterize(&g, &mut stream(&[4]));
        let mut grad = GaussianGrad::zeros(2);
        reparameterize_backward(&s, &[1.0, 1.0], &mut grad);
        assert_eq!(grad.mu, vec![1.0, 1.0]);
        assert_eq!(grad.sigma, s.noise);
    }

    #[test]
    fn raw_grad_respects_clamp() {
        let raw = [0.0, 0.0, 0.5, 9.0];
        let g = DiagGaussian::from_raw(&raw);
        let out = g.raw_grad(
            &raw,
            &GaussianGrad {
                mu: vec![1.0, 2.0],
                sigma: vec![1.0, 1.0],
            },
        );
        assert_eq!(out[..2], [1.0, 2.0]);
        assert!((out[2] - libm::exp(0.5)).abs() < 1e-15);
        assert_eq!(out[3], 0.0);
    }

    #[test]
    fn cross_entropy_fixtures() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![1.0 / 50.0; 50];
        assert!((cross_entropy(&uniform, 7).unwrap() - libm::log(50.0)).abs() < 1e-12);
        assert!((cross_entropy(&uniform, 7).unwrap() - 3.912).abs() < 1e-3);
        assert!((cross_entropy(&[0.5, 0.5], 0).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(Error::InvalidLabel {
                label: 2,
                classes: 2
            })
        );
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() + libm::log(1e-12)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative_and_zero_on_self(
            params in proptest::collection::vec((-5.0f64..5.0, 0.05f64..5.0, -5.0f64..5.0, 0.05f64..5.0), 1..6)
        ) {
            let q = DiagGaussian::new(params.iter().map(|p| p.0).collect(), params.iter().map(|p| p.1).collect()).unwrap();
            let p = DiagGaussian::new(params.iter().map(|p| p.2).collect(), params.iter().map(|p| p.3).collect()).unwrap();
            prop_assert!(kl_diag(&q, &p).unwrap() >= 0.0);
            prop_assert!(kl_diag(&q, &q).unwrap().abs() < 1e-15);
        }

        #[test]
        fn loglik_mu_gradient_matches_differences(
            x in proptest::collection::vec(-3.0f64..3.0, 4),
            mu in proptest::collection::vec(-3.0f64..3.0, 4),
            sigma in proptest::collection::vec(0.2f64..3.0, 4),
            mask in proptest::collection::vec(any::<bool>(), 4),
        ) {
            let g = DiagGaussian::new(mu.clone(), sigma.clone()).unwrap();
            let mut grad = GaussianGrad::zeros(4);
            masked_gaussian_loglik_backward(&x, &mask, &g, 1.0, &mut grad);
            let h = 1e-6;
            for m in 0..4 {
                let mut up = mu.clone();
                up[m] += h;
                let mut dn = mu.clone();
                dn[m] -= h;
                let fu = masked_gaussian_loglik(&x, &mask, &DiagGaussian::new(up, sigma.clone()).unwrap());
                let fd = masked_gaussian_loglik(&x, &mask, &DiagGaussian::new(dn, sigma.clone()).unwrap());
                let numeric = (fu - fd) / (2.0 * h);
                prop_assert!((numeric - grad.mu[m]).abs() <= 1e-6 * grad.mu[m].abs().max(1.0));
            }
        }
    }
}
