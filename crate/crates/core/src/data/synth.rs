use alloc::{format, vec::Vec};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LabSequence;
use crate::rng::{stream, Rng};
use crate::{Error, Result};

/// Parameters of the class-conditioned linear-Gaussian state-space generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_episodes: usize,
    pub num_classes: usize,
    pub num_tests: usize,
    pub min_days: usize,
    pub max_days: usize,
    /// Probability that a cell is removed, i.i.d.
    pub missing_rate: f64,
    pub latent_dim: usize,
    /// AR(1) coefficient of every latent axis, in `[0, 1)`.
    pub persistence: f64,
    /// Latent innovation std of class 0.
    pub innovation: f64,
    /// Each class's innovation std is this factor times the previous class's.
    pub volatility_ratio: f64,
    /// Scale of the per-class latent mean.
    pub class_separation: f64,
    /// Std of the per-episode latent offset.
    pub episode_effect: f64,
    /// Std of the per-test observation noise, in latent units.
    pub obs_noise: f64,
    /// Std of a class-specific shift added to each test outside the latent
    /// state.
    pub test_shift: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_episodes: 2000,
            num_classes: 4,
            num_tests: 10,
            min_days: 5,
            max_days: 20,
            missing_rate: 0.54,
            latent_dim: 3,
            persistence: 0.8,
            innovation: 0.15,
            volatility_ratio: 2.5,
            class_separation: 0.3,
            episode_effect: 0.5,
            obs_noise: 0.3,
            test_shift: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidRate(self.missing_rate));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::InvalidConfig(format!(
                "persistence {} outside [0, 1)",
                self.persistence
            )));
        }
        let scales = [
            ("innovation", self.innovation),
            ("volatility_ratio", self.volatility_ratio),
            ("class_separation", self.class_separation),
            ("episode_effect", self.episode_effect),
            ("obs_noise", self.obs_noise),
            ("test_shift", self.test_shift),
        ];
        for (name, v) in scales {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be finite and ≥ 0, got {v}"
                )));
            }
        }
        if self.num_classes == 0 || self.num_tests == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidConfig(
                "need ≥1 class, ≥1 test and ≥1 latent dimension".into(),
            ));
        }
        if self.min_days < 2 || self.min_days > self.max_days {
            return Err(Error::InvalidConfig(format!(
                "day range [{}, {}] must satisfy 2 ≤ min ≤ max",
                self.min_days, self.max_days
            )));
        }
        Ok(())
    }

    /// Latent innovation std of class `c`.
    pub fn class_innovation(&self, c: usize) -> f64 {
        self.innovation * libm::pow(self.volatility_ratio, c as f64)
    }
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Generates raw (unnormalized) episodes.
///
/// The latent state follows an AR(1) walk whose innovation std depends on the
/// class, around a class-specific latent mean shifted by a per-episode offset.
/// Tests load linearly on the latent state, add a class-specific level shift
/// and carry their own units (offset and scale). Cells are then removed i.i.d. with probability
/// `missing_rate`; an episode that loses every cell keeps one.
pub fn synth_generate(config: &SynthConfig, seed: u64) -> Result<Vec<LabSequence>> {
    config.validate()?;
    let k = config.latent_dim;
    let m = config.num_tests;
    let mut rng = stream(&[seed, 0x0053_594e_5448]);

    let scale_k = 1.0 / libm::sqrt(k as f64);
    let loading: Vec<f64> = (0..m * k).map(|_| normal(&mut rng) * scale_k).collect();
    let offsets: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..100.0)).collect();
    let units: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..20.0)).collect();
    let means: Vec<Vec<f64>> = (0..config.num_classes)
        .map(|_| {
            (0..k)
                .map(|_| normal(&mut rng) * config.class_separation)
                .collect()
        })
        .collect();
    let shifts: Vec<Vec<f64>> = (0..config.num_classes)
        .map(|_| {
            (0..m)
                .map(|_| normal(&mut rng) * config.test_shift)
                .collect()
        })
        .collect();
    let vols: Vec<f64> = (0..config.num_classes)
        .map(|c| config.class_innovation(c))
        .collect();

    let rho = config.persistence;
    let mut out = Vec::with_capacity(config.num_episodes);
    for n in 0..config.num_episodes {
        let label = rng.random_range(0..config.num_classes);
        let days = rng.random_range(config.min_days..=config.max_days);
        let mean = &means[label];
        let offset: Vec<f64> = (0..k)
            .map(|_| normal(&mut rng) * config.episode_effect)
            .collect();
        let mut state: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut seq = LabSequence::empty(format!("syn{n:06}"), label, days, m)?;
        for t in 0..days {
            if t > 0 {
                for s in state.iter_mut() {
                    *s = rho * *s + vols[label] * normal(&mut rng);
                }
            }
            for j in 0..m {
                let x: f64 = (0..k)
                    .map(|i| loading[j * k + i] * (state[i] + mean[i] + offset[i]))
                    .sum::<f64>()
                    + shifts[label][j]
                    + config.obs_noise * normal(&mut rng);
                let keep = rng.random::<f64>() >= config.missing_rate;
                seq.set(t, j, offsets[j] + units[j] * x, keep);
            }
        }
        if seq.observed_count() == 0 {
            let (t, j) = (rng.random_range(0..days), rng.random_range(0..m));
            let v = seq.value(t, j);
            seq.set(t, j, v, true);
        }
        seq.zero_fill();
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::missing_rate;

    #[test]
    fn missing_rate_close_to_target() {
        let cfg = SynthConfig {
            num_classes: 4,
            num_tests: 10,
            min_days: 5,
            max_days: 20,
            missing_rate: 0.54,
            ..SynthConfig::default()
        };
        let data = synth_generate(&cfg, 7).unwrap();
        let observed = 1.0 - missing_rate(&data);
        assert!(
            (observed - 0.46).abs() < 0.02,
            "observed fraction {observed}"
        );
        for s in &data {
            assert!((5..=20).contains(&s.days()));
            assert!(s.label < 4);
            s.validate(4).unwrap();
        }
    }

    #[test]
    fn no_missingness_when_rate_zero() {
        let cfg = SynthConfig {
            num_episodes: 50,
            missing_rate: 0.0,
            ..SynthConfig::default()
        };
        let data = synth_generate(&cfg, 1).unwrap();
        assert_eq!(missing_rate(&data), 0.0);
    }

    #[test]
    fn deterministic_and_validated() {
        let cfg = SynthConfig {
            num_episodes: 30,
            ..SynthConfig::default()
        };
        assert_eq!(
            synth_generate(&cfg, 3).unwrap(),
            synth_generate(&cfg, 3).unwrap()
        );
        assert_ne!(
            synth_generate(&cfg, 3).unwrap(),
            synth_generate(&cfg, 4).unwrap()
        );
        for bad in [1.0, -0.1, 1.5] {
            let cfg = SynthConfig {
                missing_rate: bad,
                ..SynthConfig::default()
            };
            assert_eq!(synth_generate(&cfg, 0), Err(Error::InvalidRate(bad)));
        }
    }

    #[test]
    fn volatility_grows_with_class() {
        let cfg = SynthConfig::default();
        let v: Vec<f64> = (0..4).map(|c| cfg.class_innovation(c)).collect();
        let want = [0.15, 0.375, 0.9375, 2.34375];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let bad = SynthConfig {
            obs_noise: -1.0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            synth_generate(&bad, 0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
