use alloc::{collections::BTreeMap, string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use super::LabSequence;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoverageFlag {
    /// Never observed in the training split: mean 0, std 1.
    Unobserved,
    /// Fewer than two distinct observed values: std replaced by 1.
    Constant,
}

/// Per-test Z-normalization statistics, fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation (divide by n).
    pub std: Vec<f64>,
    pub observed: Vec<usize>,
    pub flags: Vec<Option<CoverageFlag>>,
    #[serde(default)]
    pub category_map: BTreeMap<usize, BTreeMap<String, f64>>,
}

impl NormStats {
    pub fn flagged(&self) -> impl Iterator<Item = (usize, CoverageFlag)> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(m, f)| f.map(|f| (m, f)))
    }
}

pub fn fit_normalization(train: &[LabSequence]) -> Result<NormStats> {
    let first = train.first().ok_or(Error::TooFew {
        required: 1,
        found: 0,
    })?;
    let tests = first.tests();
    let mut sum = vec![0.0; tests];
    let mut count = vec![0usize; tests];
    let mut first_seen: Vec<Option<f64>> = vec![None; tests];
    let mut distinct = vec![false; tests];
    for seq in train {
        if seq.tests() != tests {
            return Err(Error::ShapeMismatch {
                context: "normalization tests",
                expected: tests,
                found: seq.tests(),
            });
        }
        for (i, (&v, &o)) in seq.values().iter().zip(seq.mask()).enumerate() {
            if o {
                let m = i % tests;
                sum[m] += v;
                count[m] += 1;
                match first_seen[m] {
                    None => first_seen[m] = Some(v),
                    Some(f) if f != v => distinct[m] = true,
                    _ => {}
                }
            }
        }
    }
    let mean: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut sq = vec![0.0; tests];
    for seq in train {
        for (i, (&v, &o)) in seq.values().iter().zip(seq.mask()).enumerate() {
            if o {
                let m = i % tests;
                let d = v - mean[m];
                sq[m] += d * d;
            }
        }
    }
    let mut std = vec![1.0; tests];
    let mut flags = vec![None; tests];
    for m in 0..tests {
        if count[m] == 0 {
            flags[m] = Some(CoverageFlag::Unobserved);
        } else if !distinct[m] {
            flags[m] = Some(CoverageFlag::Constant);
        } else {
            std[m] = libm::sqrt(sq[m] / count[m] as f64);
        }
    }
    Ok(NormStats {
        mean,
        std,
        observed: count,
        flags,
        category_map: BTreeMap::new(),
    })
}

/// Observed cells become `(v − mean) / std`; unobserved cells become 0.
pub fn apply_normalization(seq: &LabSequence, stats: &NormStats) -> LabSequence {
    let tests = seq.tests();
    let mut out = seq.clone();
    let mask = seq.mask().to_vec();
    for (i, v) in out.values_mut().iter_mut().enumerate() {
        let m = i % tests;
        *v = if mask[i] {
            (*v - stats.mean[m]) / stats.std[m]
        } else {
            0.0
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::average_sequence;
    use proptest::prelude::*;

    fn column(values: &[Option<f64>]) -> LabSequence {
        let mut s = LabSequence::empty("e", 0, values.len(), 1).unwrap();
        for (t, v) in values.iter().enumerate() {
            if let Some(v) = v {
                s.set(t, 0, *v, true);
            }
        }
        s
    }

    #[test]
    fn population_statistics() {
        let stats = fit_normalization(&[column(&[Some(1.0), Some(2.0), None, Some(3.0)])]).unwrap();
        assert_eq!(stats.mean[0], 2.0);
        // population estimator: sqrt(((1-2)² + 0 + (3-2)²) / 3)
        assert!((stats.std[0] - libm::sqrt(2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(stats.flags[0], None);
    }

    #[test]
    fn degenerate_columns_are_flagged() {
        let stats = fit_normalization(&[column(&[Some(4.0), Some(4.0)])]).unwrap();
        assert_eq!((stats.mean[0], stats.std[0]), (4.0, 1.0));
        assert_eq!(stats.flags[0], Some(CoverageFlag::Constant));
        let stats = fit_normalization(&[column(&[None, None])]).unwrap();
        assert_eq!((stats.mean[0], stats.std[0]), (0.0, 1.0));
        assert_eq!(stats.flags[0], Some(CoverageFlag::Unobserved));
        assert!(fit_normalization(&[]).is_err());
    }

    #[test]
    fn apply_formula_and_zero_fill() {
        let stats = NormStats {
            mean: vec![5.0],
            std: vec![2.0],
            observed: vec![1],
            flags: vec![None],
            category_map: BTreeMap::new(),
        };
        let mut s = column(&[Some(7.0), None, Some(5.0)]);
        s.values_mut()[1] = 123.0;
        let n = apply_normalization(&s, &stats);
        assert_eq!(n.values(), &[1.0, 0.0, 0.0]);
        assert_eq!(n.mask(), s.mask());
    }

    proptest! {
        #[test]
        fn unit_changes_cancel(
            cells in proptest::collection::vec(proptest::option::of(-50.0f64..50.0), 12),
            scale in proptest::collection::vec(0.1f64..20.0, 3),
            shift in proptest::collection::vec(-100.0f64..100.0, 3),
        ) {
            let mut a = LabSequence::empty("a", 0, 4, 3).unwrap();
            let mut b = a.clone();
            for (i, c) in cells.iter().enumerate() {
                if let Some(v) = c {
                    let m = i % 3;
                    a.set(i / 3, m, *v, true);
                    b.set(i / 3, m, v * scale[m] + shift[m], true);
                }
            }
            let (sa, sb) = (fit_normalization(&[a.clone()]).unwrap(), fit_normalization(&[b.clone()]).unwrap());
            let va = average_sequence(&apply_normalization(&a, &sa));
            let vb = average_sequence(&apply_normalization(&b, &sb));
            prop_assert_eq!(&va.mask, &vb.mask);
            for (x, y) in va.values.iter().zip(&vb.values) {
                prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
            }
            let n = apply_normalization(&a, &sa);
            for (v, o) in n.values().iter().zip(n.mask()) {
                prop_assert!(*o || *v == 0.0);
            }
        }
    }
}
