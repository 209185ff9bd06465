//! Filling missing lab values and scoring fills against deliberately
//! hidden observations.

use alloc::{string::String, vec, vec::Vec};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::LabSequence;
use crate::metrics::{mean_std, paired_t_test, TTest};
use crate::models::Model;
use crate::rng::stream;
use crate::{Error, Result};

/// A `T × M` grid with every cell filled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputedGrid {
    pub days: usize,
    pub tests: usize,
    pub values: Vec<f64>,
}

impl ImputedGrid {
    pub fn value(&self, day: usize, test: usize) -> f64 {
        self.values[day * self.tests + test]
    }
}

/// Any method that completes a sequence from its observed cells alone.
pub trait Imputer {
    fn name(&self) -> String;
    fn impute(&self, seq: &LabSequence) -> Result<ImputedGrid>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    Zero,
    LastNext,
    RowMean,
    Nocb,
}

impl Heuristic {
    pub const ALL: [Heuristic; 4] = [
        Heuristic::Zero,
        Heuristic::LastNext,
        Heuristic::RowMean,
        Heuristic::Nocb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Heuristic::Zero => "zero",
            Heuristic::LastNext => "last&next",
            Heuristic::RowMean => "row mean",
            Heuristic::Nocb => "NOCB",
        }
    }
}

impl Imputer for Heuristic {
    fn name(&self) -> String {
        self.label().into()
    }

    fn impute(&self, seq: &LabSequence) -> Result<ImputedGrid> {
        Ok(match self {
            Heuristic::Zero => impute_zero(seq),
            Heuristic::LastNext => impute_last_next(seq),
            Heuristic::RowMean => impute_row_mean(seq),
            Heuristic::Nocb => impute_nocb(seq),
        })
    }
}

/// Fills each test's column with `fill(observed (day, value) pairs, day)`.
fn per_column(seq: &LabSequence, fill: impl Fn(&[(usize, f64)], usize) -> f64) -> ImputedGrid {
    let (days, tests) = (seq.days(), seq.tests());
    let mut values = vec![0.0; days * tests];
    let mut seen = Vec::with_capacity(days);
    for m in 0..tests {
        seen.clear();
        seen.extend(
            (0..days)
                .filter(|&t| seq.observed(t, m))
                .map(|t| (t, seq.value(t, m))),
        );
        for t in 0..days {
            values[t * tests + m] = if seq.observed(t, m) {
                seq.value(t, m)
            } else if seen.is_empty() {
                0.0
            } else {
                fill(&seen, t)
            };
        }
    }
    ImputedGrid {
        days,
        tests,
        values,
    }
}

/// Nearest observations before and after `t`.
fn neighbours(seen: &[(usize, f64)], t: usize) -> (Option<f64>, Option<f64>) {
    let split = seen.partition_point(|&(d, _)| d < t);
    let prev = split.checked_sub(1).map(|i| seen[i].1);
    let next = seen.get(split).map(|p| p.1);
    (prev, next)
}

/// Missing cells become 0, the normalized mean.
pub fn impute_zero(seq: &LabSequence) -> ImputedGrid {
    per_column(seq, |_, _| 0.0)
}

/// Midpoint of the neighbouring observations; one-sided gaps copy the only
/// neighbour.
pub fn impute_last_next(seq: &LabSequence) -> ImputedGrid {
    per_column(seq, |seen, t| match neighbours(seen, t) {
        (Some(a), Some(b)) => (a + b) / 2.0,
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => 0.0,
    })
}

/// Mean of the test's observations within the episode.
pub fn impute_row_mean(seq: &LabSequence) -> ImputedGrid {
    per_column(seq, |seen, _| {
        seen.iter().map(|p| p.1).sum::<f64>() / seen.len() as f64
    })
}

/// Next observation carried backward; trailing gaps carry the last one forward.
pub fn impute_nocb(seq: &LabSequence) -> ImputedGrid {
    per_column(seq, |seen, t| match neighbours(seen, t) {
        (_, Some(b)) => b,
        (Some(a), None) => a,
        (None, None) => 0.0,
    })
}

/// VRNN decoder means (posterior-mean recurrence) in every missing cell.
pub fn impute_model(model: &Model, seq: &LabSequence) -> Result<ImputedGrid> {
    let recon = model.reconstruct(seq)?;
    let values = seq
        .values()
        .iter()
        .zip(seq.mask())
        .zip(&recon)
        .map(|((&v, &observed), &r)| if observed { v } else { r })
        .collect();
    Ok(ImputedGrid {
        days: seq.days(),
        tests: seq.tests(),
        values,
    })
}

/// A trained VRNN used as an [`Imputer`].
pub struct ModelImputer<'a> {
    pub model: &'a Model,
    pub name: String,
}

impl Imputer for ModelImputer<'_> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn impute(&self, seq: &LabSequence) -> Result<ImputedGrid> {
        impute_model(self.model, seq)
    }
}

/// Observed coordinates hidden for scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropPlan {
    /// `(episode index, day, test)`, sorted.
    pub coordinates: Vec<(usize, usize, usize)>,
    pub rate: f64,
    pub seed: u64,
}

impl DropPlan {
    /// Hides `round(rate × observed)` observed cells chosen uniformly.
    pub fn new(seqs: &[LabSequence], rate: f64, seed: u64) -> Result<Self> {
        if !(rate > 0.0 && rate < 1.0) {
            return Err(Error::InvalidRate(rate));
        }
        let mut observed = Vec::new();
        for (e, seq) in seqs.iter().enumerate() {
            for t in 0..seq.days() {
                for m in 0..seq.tests() {
                    if seq.observed(t, m) {
                        observed.push((e, t, m));
                    }
                }
            }
        }
        let k = libm::round(rate * observed.len() as f64) as usize;
        let mut picked =
            index::sample(&mut stream(&[seed, 0x4452_4f50]), observed.len(), k).into_vec();
        picked.sort_unstable();
        Ok(Self {
            coordinates: picked.into_iter().map(|i| observed[i]).collect(),
            rate,
            seed,
        })
    }

    /// Copies of `seqs` with the planned cells masked and zeroed.
    pub fn apply(&self, seqs: &[LabSequence]) -> Vec<LabSequence> {
        let mut out = seqs.to_vec();
        for &(e, t, m) in &self.coordinates {
            out[e].hide(t, m);
        }
        out
    }
}

/// Per-method MSE on the hidden cells for one drop seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationRun {
    pub seed: u64,
    pub hidden: usize,
    pub mse: Vec<(String, f64)>,
}

/// Hides cells once, lets each method fill the masked copy, and scores only
/// the hidden cells.
pub fn evaluate_imputation(
    seqs: &[LabSequence],
    methods: &[&dyn Imputer],
    rate: f64,
    seed: u64,
) -> Result<ImputationRun> {
    let plan = DropPlan::new(seqs, rate, seed)?;
    if plan.coordinates.is_empty() {
        return Err(Error::TooFew {
            required: 1,
            found: 0,
        });
    }
    let hidden = plan.apply(seqs);
    let mut mse = Vec::with_capacity(methods.len());
    for method in methods {
        let mut grids: Vec<Option<ImputedGrid>> = vec![None; seqs.len()];
        let mut sum = 0.0;
        for &(e, t, m) in &plan.coordinates {
            if grids[e].is_none() {
                grids[e] = Some(method.impute(&hidden[e])?);
            }
            let guess = grids[e].as_ref().expect("filled above").value(t, m);
            let r = guess - seqs[e].value(t, m);
            sum += r * r;
        }
        let score = sum / plan.coordinates.len() as f64;
        if !score.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "{} imputation error",
                method.name()
            )));
        }
        mse.push((method.name(), score));
    }
    Ok(ImputationRun {
        seed,
        hidden: plan.coordinates.len(),
        mse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: String,
    pub reference: String,
    pub test: TTest,
}

/// Mean ± std per method over seeds, plus paired t-tests of every method
/// against `reference`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<MethodRow>,
    pub comparisons: Vec<Comparison>,
}

impl ImputationTable {
    pub fn from_runs(runs: &[ImputationRun], reference: &str) -> Result<Self> {
        let first = runs.first().ok_or(Error::TooFew {
            required: 1,
            found: 0,
        })?;
        let names: Vec<String> = first.mse.iter().map(|p| p.0.clone()).collect();
        let mut rows = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let per_seed: Vec<f64> = runs
                .iter()
                .map(|r| match r.mse.get(i) {
                    Some((n, v)) if n == name => Ok(*v),
                    _ => Err(Error::InvalidConfig(
                        "imputation runs list different methods".into(),
                    )),
                })
                .collect::<Result<_>>()?;
            let (mean, std) = mean_std(&per_seed);
            rows.push(MethodRow {
                method: name.clone(),
                per_seed,
                mean,
                std,
            });
        }
        let mut comparisons = Vec::new();
        if runs.len() >= 2 {
            let reference_row = rows.iter().find(|r| r.method == reference).ok_or_else(|| {
                Error::InvalidConfig(alloc::format!("no method named `{reference}`"))
            })?;
            for row in rows.iter().filter(|r| r.method != reference) {
                comparisons.push(Comparison {
                    method: row.method.clone(),
                    reference: reference.into(),
                    test: paired_t_test(&row.per_seed, &reference_row.per_seed)?,
                });
            }
        }
        Ok(Self {
            seeds: runs.iter().map(|r| r.seed).collect(),
            rows,
            comparisons,
        })
    }

    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, SynthConfig};
    use alloc::{collections::BTreeMap, format};
    use proptest::prelude::*;

    const MISS: f64 = f64::NAN;

    /// One test, one value per day; NaN marks a missing day.
    fn column(xs: &[f64]) -> LabSequence {
        let mut s = LabSequence::empty("c", 0, xs.len(), 1).unwrap();
        for (t, &x) in xs.iter().enumerate() {
            if !x.is_nan() {
                s.set(t, 0, x, true);
            }
        }
        s
    }

    fn filled(f: fn(&LabSequence) -> ImputedGrid, xs: &[f64]) -> Vec<f64> {
        f(&column(xs)).values
    }

    #[test]
    fn zero_fixtures() {
        assert_eq!(filled(impute_zero, &[1.0, MISS, 3.0]), vec![1.0, 0.0, 3.0]);
        assert_eq!(filled(impute_zero, &[1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(filled(impute_zero, &[MISS, MISS]), vec![0.0, 0.0]);
    }

    #[test]
    fn last_next_fixtures() {
        assert_eq!(
            filled(impute_last_next, &[1.0, MISS, 3.0]),
            vec![1.0, 2.0, 3.0]
        );
        assert_eq!(
            filled(impute_last_next, &[MISS, 5.0, MISS]),
            vec![5.0, 5.0, 5.0]
        );
        assert_eq!(filled(impute_last_next, &[MISS, MISS]), vec![0.0, 0.0]);
    }

    #[test]
    fn row_mean_fixtures() {
        assert_eq!(
            filled(impute_row_mean, &[1.0, MISS, 3.0, MISS, 5.0]),
            vec![1.0, 3.0, 3.0, 3.0, 5.0]
        );
        assert_eq!(filled(impute_row_mean, &[MISS, 7.0]), vec![7.0, 7.0]);
        assert_eq!(filled(impute_row_mean, &[MISS, MISS, MISS]), vec![0.0; 3]);
    }

    #[test]
    fn nocb_fixtures() {
        assert_eq!(filled(impute_nocb, &[1.0, MISS, 3.0]), vec![1.0, 3.0, 3.0]);
        assert_eq!(filled(impute_nocb, &[MISS, 2.0]), vec![2.0, 2.0]);
        assert_eq!(filled(impute_nocb, &[4.0, MISS]), vec![4.0, 4.0]);
    }

    fn dataset(n: usize, seed: u64) -> Vec<LabSequence> {
        let cfg = SynthConfig {
            num_episodes: n,
            ..SynthConfig::default()
        };
        synth_generate(&cfg, seed).unwrap()
    }

    #[test]
    fn drop_plan_hides_rounded_share_of_observed_cells() {
        let seqs = dataset(30, 1);
        let observed: usize = seqs.iter().map(|s| s.observed_count()).sum();
        let plan = DropPlan::new(&seqs, 0.1, 3).unwrap();
        assert_eq!(
            plan.coordinates.len(),
            libm::round(0.1 * observed as f64) as usize
        );
        for &(e, t, m) in &plan.coordinates {
            assert!(seqs[e].observed(t, m));
        }
        let hidden = plan.apply(&seqs);
        let left: usize = hidden.iter().map(|s| s.observed_count()).sum();
        assert_eq!(left, observed - plan.coordinates.len());
        assert_eq!(plan, DropPlan::new(&seqs, 0.1, 3).unwrap());
        assert_ne!(plan, DropPlan::new(&seqs, 0.1, 4).unwrap());
    }

    #[test]
    fn rate_outside_unit_interval_is_rejected() {
        let seqs = dataset(10, 1);
        for rate in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(DropPlan::new(&seqs, rate, 0).is_err());
        }
    }

    /// Looks the hidden values up in the untouched data.
    struct Oracle(BTreeMap<String, LabSequence>);

    impl Imputer for Oracle {
        fn name(&self) -> String {
            "oracle".into()
        }

        fn impute(&self, seq: &LabSequence) -> Result<ImputedGrid> {
            let truth = &self.0[&seq.episode_id];
            Ok(ImputedGrid {
                days: truth.days(),
                tests: truth.tests(),
                values: truth.values().to_vec(),
            })
        }
    }

    #[test]
    fn oracle_scores_zero_and_zero_fill_scores_second_moment() {
        let seqs = dataset(40, 2);
        let oracle = Oracle(
            seqs.iter()
                .map(|s| (s.episode_id.clone(), s.clone()))
                .collect(),
        );
        let run = evaluate_imputation(&seqs, &[&oracle, &Heuristic::Zero], 0.1, 7).unwrap();
        assert_eq!(run.mse[0], ("oracle".into(), 0.0));

        let plan = DropPlan::new(&seqs, 0.1, 7).unwrap();
        let direct = plan
            .coordinates
            .iter()
            .map(|&(e, t, m)| seqs[e].value(t, m).powi(2))
            .sum::<f64>()
            / plan.coordinates.len() as f64;
        assert_eq!(run.mse[1].1, direct);
    }

    #[test]
    fn methods_never_see_hidden_values() {
        struct Snoop;
        impl Imputer for Snoop {
            fn name(&self) -> String {
                "snoop".into()
            }
            fn impute(&self, seq: &LabSequence) -> Result<ImputedGrid> {
                for (v, &o) in seq.values().iter().zip(seq.mask()) {
                    assert!(o || *v == 0.0);
                }
                Ok(impute_zero(seq))
            }
        }
        let seqs = dataset(20, 3);
        evaluate_imputation(&seqs, &[&Snoop], 0.2, 1).unwrap();
    }

    #[test]
    fn table_has_reference_comparisons() {
        let seqs = dataset(60, 4);
        let methods: Vec<&dyn Imputer> = Heuristic::ALL.iter().map(|h| h as &dyn Imputer).collect();
        let runs: Vec<ImputationRun> = (1..=5)
            .map(|s| evaluate_imputation(&seqs, &methods, 0.1, s).unwrap())
            .collect();
        let table = ImputationTable::from_runs(&runs, "last&next").unwrap();
        assert_eq!(table.rows.len(), 4);
        assert_eq!(table.comparisons.len(), 3);
        assert_eq!(table.seeds, vec![1, 2, 3, 4, 5]);
        let zero = table.row("zero").unwrap();
        assert_eq!(zero.per_seed.len(), 5);
        assert!(ImputationTable::from_runs(&runs, "vrnn").is_err());
    }

    fn arb_seq() -> impl Strategy<Value = LabSequence> {
        (1usize..8, 1usize..4).prop_flat_map(|(days, tests)| {
            proptest::collection::vec((-5.0f64..5.0, proptest::bool::ANY), days * tests).prop_map(
                move |cells| {
                    let mut s = LabSequence::empty(format!("p{days}"), 0, days, tests).unwrap();
                    for (i, (v, o)) in cells.into_iter().enumerate() {
                        if o {
                            s.set(i / tests, i % tests, v, true);
                        }
                    }
                    s
                },
            )
        })
    }

    proptest! {
        #[test]
        fn heuristics_keep_observed_cells_and_fill_everything(seq in arb_seq()) {
            for h in Heuristic::ALL {
                let g = h.impute(&seq).unwrap();
                prop_assert_eq!(g.values.len(), seq.days() * seq.tests());
                for t in 0..seq.days() {
                    for m in 0..seq.tests() {
                        let v = g.value(t, m);
                        prop_assert!(v.is_finite());
                        if seq.observed(t, m) {
                            prop_assert_eq!(v.to_bits(), seq.value(t, m).to_bits());
                        }
                    }
                }
            }
        }

        #[test]
        fn single_gaps_take_midpoint_and_right_neighbour(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let s = column(&[a, MISS, b]);
            prop_assert_eq!(impute_last_next(&s).values[1], (a + b) / 2.0);
            prop_assert_eq!(impute_nocb(&s).values[1], b);
        }

        #[test]
        fn masked_contents_do_not_change_fills(seq in arb_seq(), junk in -100.0f64..100.0) {
            let mut dirty = seq.clone();
            let mask = seq.mask().to_vec();
            for (v, &o) in dirty.values_mut().iter_mut().zip(&mask) {
                if !o {
                    *v = junk;
                }
            }
            for h in Heuristic::ALL {
                prop_assert_eq!(h.impute(&seq).unwrap(), h.impute(&dirty).unwrap());
            }
        }
    }
}
