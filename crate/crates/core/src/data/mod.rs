//! Lab-test episodes as day-grouped, masked value grids.

mod ingest;
mod normalize;
mod split;
mod synth;

use alloc::{format, string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use ingest::{
    ingest_events, EventValue, FrequencyReport, IngestOutcome, IngestSchema, LabEvent,
};
pub use normalize::{apply_normalization, fit_normalization, CoverageFlag, NormStats};
pub use split::{split_dataset, split_sizes, DatasetSplit};
pub use synth::{synth_generate, SynthConfig};

pub const MAX_DAYS: usize = 100;

/// One episode: a `days × tests` grid of values with an observation mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabSequence {
    pub episode_id: String,
    pub label: usize,
    days: usize,
    tests: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl LabSequence {
    /// Builds a sequence from row-major grids. Cells with `mask = false` may
    /// hold anything until [`LabSequence::zero_fill`] or normalization.
    pub fn new(
        episode_id: impl Into<String>,
        label: usize,
        days: usize,
        tests: usize,
        values: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        if days == 0 || tests == 0 {
            return Err(Error::InvalidSequence(format!(
                "empty grid ({days} days × {tests} tests)"
            )));
        }
        for (context, found) in [
            ("sequence values", values.len()),
            ("sequence mask", mask.len()),
        ] {
            if found != days * tests {
                return Err(Error::ShapeMismatch {
                    context,
                    expected: days * tests,
                    found,
                });
            }
        }
        Ok(Self {
            episode_id: episode_id.into(),
            label,
            days,
            tests,
            values,
            mask,
        })
    }

    /// An all-missing grid.
    pub fn empty(
        episode_id: impl Into<String>,
        label: usize,
        days: usize,
        tests: usize,
    ) -> Result<Self> {
        Self::new(
            episode_id,
            label,
            days,
            tests,
            vec![0.0; days * tests],
            vec![false; days * tests],
        )
    }

    pub fn days(&self) -> usize {
        self.days
    }

    pub fn tests(&self) -> usize {
        self.tests
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn value(&self, day: usize, test: usize) -> f64 {
        self.values[day * self.tests + test]
    }

    pub fn observed(&self, day: usize, test: usize) -> bool {
        self.mask[day * self.tests + test]
    }

    pub fn row(&self, day: usize) -> &[f64] {
        &self.values[day * self.tests..(day + 1) * self.tests]
    }

    pub fn mask_row(&self, day: usize) -> &[bool] {
        &self.mask[day * self.tests..(day + 1) * self.tests]
    }

    pub fn set(&mut self, day: usize, test: usize, value: f64, observed: bool) {
        let i = day * self.tests + test;
        self.values[i] = value;
        self.mask[i] = observed;
    }

    /// Hides an observed cell: clears the mask bit and zeroes the value.
    pub fn hide(&mut self, day: usize, test: usize) {
        self.set(day, test, 0.0, false);
    }

    /// Overwrites the value of a cell without touching its mask bit.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Sets every unobserved cell to exactly 0.
    pub fn zero_fill(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// Checks the preprocessed-sequence invariants: zero-filled unobserved
    /// cells, at least one observation, finite values, and a label in range.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.label >= num_classes {
            return Err(Error::InvalidLabel {
                label: self.label,
                classes: num_classes,
            });
        }
        if self.observed_count() == 0 {
            return Err(Error::InvalidSequence(format!(
                "episode {:?} has no observed value",
                self.episode_id
            )));
        }
        for (i, (&v, &m)) in self.values.iter().zip(&self.mask).enumerate() {
            if !v.is_finite() || (!m && v != 0.0) {
                return Err(Error::InvalidSequence(format!(
                    "episode {:?} cell {i} holds {v} (observed = {m})",
                    self.episode_id
                )));
            }
        }
        Ok(())
    }
}

/// Keeps the last `min(days, max_days)` day rows.
pub fn truncate_latest(seq: &LabSequence, max_days: usize) -> LabSequence {
    if seq.days <= max_days {
        return seq.clone();
    }
    let start = (seq.days - max_days) * seq.tests;
    LabSequence {
        episode_id: seq.episode_id.clone(),
        label: seq.label,
        days: max_days,
        tests: seq.tests,
        values: seq.values[start..].to_vec(),
        mask: seq.mask[start..].to_vec(),
    }
}

/// Time-averaged feature vector with its own observation mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedVector {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per test: mean of the observed days, or 0 with `mask = false` when the
/// test was never observed.
pub fn average_sequence(seq: &LabSequence) -> MaskedVector {
    let mut sum = vec![0.0; seq.tests];
    let mut count = vec![0usize; seq.tests];
    for t in 0..seq.days {
        for (m, (&v, &o)) in seq.row(t).iter().zip(seq.mask_row(t)).enumerate() {
            if o {
                sum[m] += v;
                count[m] += 1;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    MaskedVector {
        values,
        mask: count.iter().map(|&c| c > 0).collect(),
    }
}

/// Fraction of unobserved cells over a collection of sequences.
pub fn missing_rate(seqs: &[LabSequence]) -> f64 {
    let total: usize = seqs.iter().map(|s| s.values.len()).sum();
    let observed: usize = seqs.iter().map(LabSequence::observed_count).sum();
    if total == 0 {
        0.0
    } else {
        1.0 - observed as f64 / total as f64
    }
}
