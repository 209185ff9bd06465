use alloc::{format, vec::Vec};

use crate::rng::stream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub max_coords: usize,
    pub seed: u64,
    /// Relative errors are taken against `max(|analytic|, |numeric|,
    /// floor · max(1, |f(x)|))`.
    pub floor: f64,
}

impl GradCheckConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            step: 1e-5,
            tolerance,
            max_coords: 1000,
            seed: 0,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Coordinates whose neighbourhood is non-smooth (ReLU kink, clamp edge).
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub passed: bool,
}

/// Compares `analytic` against central differences of `f` around `params`.
///
/// At most `max_coords` coordinates are checked (a seeded sample when there
/// are more). A coordinate is skipped when second differences at steps
/// `h`, `2h`, `3h` do not scale quadratically, which only happens when a
/// kink lies within `3h`.
pub fn grad_check<F>(
    mut f: F,
    params: &[f64],
    analytic: &[f64],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            left: params.len(),
            right: analytic.len(),
        });
    }
    let n = params.len();
    let coords: Vec<usize> = if n <= cfg.max_coords {
        (0..n).collect()
    } else {
        let mut rng = stream(&[cfg.seed, 0x6772_6164]);
        let mut v = rand::seq::index::sample(&mut rng, n, cfg.max_coords).into_vec();
        v.sort_unstable();
        v
    };

    let mut x = params.to_vec();
    let mut eval = |x: &[f64]| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("gradient-check objective = {v}")))
        }
    };
    let f0 = eval(&x)?;
    let scale = cfg.floor * f0.abs().max(1.0);
    let h = cfg.step;

    let mut report = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst_index: None,
        passed: true,
    };
    for &i in &coords {
        let orig = x[i];
        let mut at = |delta: f64, x: &mut Vec<f64>| -> Result<f64> {
            x[i] = orig + delta;
            let v = eval(x);
            x[i] = orig;
            v
        };
        let p1 = at(h, &mut x)?;
        let m1 = at(-h, &mut x)?;
        let p2 = at(2.0 * h, &mut x)?;
        let m2 = at(-2.0 * h, &mut x)?;
        let p3 = at(3.0 * h, &mut x)?;
        let m3 = at(-3.0 * h, &mut x)?;

        let numeric = (p1 - m1) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(scale);

        let d1 = p1 - 2.0 * f0 + m1;
        let d2 = p2 - 2.0 * f0 + m2;
        let d3 = p3 - 2.0 * f0 + m3;
        let residual = ((d2 - 4.0 * d1) / 4.0)
            .abs()
            .max(((d3 - 9.0 * d1) / 9.0).abs());
        if residual > cfg.tolerance * h * denom {
            report.skipped_kinks += 1;
            continue;
        }

        let rel = (analytic[i] - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = Some(i);
        }
    }
    report.passed = report.max_rel_error <= cfg.tolerance;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quadratic_is_exact() {
        let x = [1.0, 2.0];
        let r = grad_check(
            |v| v.iter().map(|a| a * a).sum(),
            &x,
            &[2.0, 4.0],
            &GradCheckConfig::with_tolerance(1e-8),
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checked, 2);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_fails() {
        let r = grad_check(
            |v| v[0] * v[0],
            &[1.0],
            &[2.1],
            &GradCheckConfig::with_tolerance(1e-4),
        )
        .unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_index, Some(0));
    }

    #[test]
    fn relu_kink_is_excluded() {
        let relu = |v: &[f64]| if v[0] > 0.0 { v[0] } else { 0.0 } + v[1] * 3.0;
        let r = grad_check(
            relu,
            &[0.0, 1.0],
            &[0.0, 3.0],
            &GradCheckConfig::with_tolerance(1e-4),
        )
        .unwrap();
        assert_eq!(r.skipped_kinks, 1);
        assert_eq!(r.checked, 1);
        assert!(r.passed);
    }

    #[test]
    fn non_finite_objective_rejected() {
        let r = grad_check(
            |v| 1.0 / v[0],
            &[0.0],
            &[0.0],
            &GradCheckConfig::with_tolerance(1e-4),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn samples_at_most_max_coords() {
        let x = vec![0.5; 3000];
        let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(
            |v| v.iter().map(|a| a * a).sum(),
            &x,
            &g,
            &GradCheckConfig::with_tolerance(1e-6),
        )
        .unwrap();
        assert_eq!(r.checked + r.skipped_kinks, 1000);
        assert!(r.passed);
    }
}
