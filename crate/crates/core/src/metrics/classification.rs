use alloc::{string::String, vec, vec::Vec};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `N × C` class probabilities with the true labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    num_classes: usize,
    probs: Vec<f64>,
    labels: Vec<usize>,
}

impl PredictionSet {
    pub fn new(num_classes: usize, probs: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::TooFew {
                required: 2,
                found: num_classes,
            });
        }
        if labels.is_empty() {
            return Err(Error::TooFew {
                required: 1,
                found: 0,
            });
        }
        if probs.len() != labels.len() * num_classes {
            return Err(Error::ShapeMismatch {
                context: "prediction matrix",
                expected: labels.len() * num_classes,
                found: probs.len(),
            });
        }
        for (row, &y) in probs.chunks_exact(num_classes).zip(&labels) {
            if y >= num_classes {
                return Err(Error::InvalidLabel {
                    label: y,
                    classes: num_classes,
                });
            }
            let s: f64 = row.iter().sum();
            if !s.is_finite() || (s - 1.0).abs() > 1e-9 || row.iter().any(|&p| p < 0.0) {
                return Err(Error::NonFinite(alloc::format!(
                    "probability row sums to {s}"
                )));
            }
        }
        Ok(Self {
            num_classes,
            probs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.probs[n * self.num_classes..(n + 1) * self.num_classes]
    }

    /// Arg-max class per row, lowest index on ties.
    pub fn hard_predictions(&self) -> Vec<usize> {
        self.probs
            .chunks_exact(self.num_classes)
            .map(|row| {
                let mut best = 0;
                for (k, &p) in row.iter().enumerate().skip(1) {
                    if p > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn support(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_classes];
        for &y in &self.labels {
            s[y] += 1;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub micro: f64,
    /// Unweighted mean over classes present in the labels.
    pub macro_: f64,
    /// Support-weighted mean (`n_i / N`).
    pub weighted: f64,
    pub per_class: Vec<f64>,
}

pub fn f1_scores(preds: &PredictionSet) -> F1Scores {
    let c = preds.num_classes;
    let hard = preds.hard_predictions();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; c], vec![0usize; c], vec![0usize; c]);
    for (&p, &y) in hard.iter().zip(&preds.labels) {
        if p == y {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[y] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fneg: usize| {
        let denom = 2 * tp + fp + fneg;
        if tp == 0 {
            0.0
        } else {
            (2 * tp) as f64 / denom as f64
        }
    };
    let per_class: Vec<f64> = (0..c).map(|k| f1(tp[k], fp[k], fneg[k])).collect();
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fneg.iter().sum());
    let support = preds.support();
    let present: Vec<usize> = (0..c).filter(|&k| support[k] > 0).collect();
    let macro_ = present.iter().map(|&k| per_class[k]).sum::<f64>() / present.len() as f64;
    let n = preds.len() as f64;
    let weighted = present
        .iter()
        .map(|&k| per_class[k] * support[k] as f64)
        .sum::<f64>()
        / n;
    F1Scores {
        micro,
        macro_,
        weighted,
        per_class,
    }
}

/// ROC AUC by the rank statistic with mid-ranks for ties. `None` when one
/// of the two groups is empty.
pub fn binary_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share the mid-rank
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| positive[k]).count();
        rank_sum += mid * pos_in_group as f64;
        i = j;
    }
    let p = n_pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucScores {
    /// One-vs-rest over the flattened `N × C` indicator matrix.
    pub micro: f64,
    pub macro_: Option<f64>,
    pub weighted: Option<f64>,
    pub per_class: Vec<Option<f64>>,
    /// Classes left out of the macro averages (no positives or no negatives).
    pub skipped: Vec<usize>,
}

pub fn auc_scores(preds: &PredictionSet) -> AucScores {
    let c = preds.num_classes;
    let n = preds.len();
    let flat_pos: Vec<bool> = preds
        .labels
        .iter()
        .flat_map(|&y| (0..c).map(move |k| k == y))
        .collect();
    let micro = binary_auc(&preds.probs, &flat_pos).unwrap_or(0.5);

    let support = preds.support();
    let mut per_class = Vec::with_capacity(c);
    let mut scores = vec![0.0; n];
    let mut positive = vec![false; n];
    for k in 0..c {
        for i in 0..n {
            scores[i] = preds.probs[i * c + k];
            positive[i] = preds.labels[i] == k;
        }
        per_class.push(binary_auc(&scores, &positive));
    }
    let skipped: Vec<usize> = (0..c).filter(|&k| per_class[k].is_none()).collect();
    let included: Vec<(f64, usize)> = (0..c)
        .filter_map(|k| per_class[k].map(|a| (a, support[k])))
        .collect();
    let (macro_, weighted) = if included.is_empty() {
        (None, None)
    } else {
        let total: usize = included.iter().map(|x| x.1).sum();
        (
            Some(included.iter().map(|x| x.0).sum::<f64>() / included.len() as f64),
            Some(included.iter().map(|&(a, s)| a * s as f64).sum::<f64>() / total as f64),
        )
    };
    AucScores {
        micro,
        macro_,
        weighted,
        per_class,
        skipped,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class_id: usize,
    pub name: String,
    pub f1: f64,
    pub auc: Option<f64>,
    pub support: usize,
    pub no_support: bool,
}

/// The six headline scores plus per-class rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub macro_f1_w: f64,
    pub micro_auc: f64,
    pub macro_auc: Option<f64>,
    pub macro_auc_w: Option<f64>,
    pub per_class: Vec<ClassRow>,
    pub skipped_auc_classes: Vec<usize>,
}

impl MetricsReport {
    /// The six scores in table order; undefined AUC averages become NaN.
    pub fn headline(&self) -> [f64; 6] {
        [
            self.micro_f1,
            self.macro_f1,
            self.macro_f1_w,
            self.micro_auc,
            self.macro_auc.unwrap_or(f64::NAN),
            self.macro_auc_w.unwrap_or(f64::NAN),
        ]
    }
}

pub type PerClassReport = MetricsReport;

pub fn evaluate(preds: &PredictionSet) -> MetricsReport {
    per_class_report(preds, &[])
}

/// Per-class F1, AUC and support sorted by class id, with the totals.
/// Names default to the class id when `class_names` is short.
pub fn per_class_report(preds: &PredictionSet, class_names: &[String]) -> MetricsReport {
    let f1 = f1_scores(preds);
    let auc = auc_scores(preds);
    let support = preds.support();
    let per_class = (0..preds.num_classes)
        .map(|k| ClassRow {
            class_id: k,
            name: class_names
                .get(k)
                .cloned()
                .unwrap_or_else(|| alloc::format!("{k}")),
            f1: f1.per_class[k],
            auc: if support[k] > 0 {
                auc.per_class[k]
            } else {
                None
            },
            support: support[k],
            no_support: support[k] == 0,
        })
        .collect();
    MetricsReport {
        micro_f1: f1.micro,
        macro_f1: f1.macro_,
        macro_f1_w: f1.weighted,
        micro_auc: auc.micro,
        macro_auc: auc.macro_,
        macro_auc_w: auc.weighted,
        per_class,
        skipped_auc_classes: auc.skipped,
    }
}
