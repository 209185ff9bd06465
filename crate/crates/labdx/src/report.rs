//! Plain-text tables in the `0.426 ± 0.002` style, with machine-readable
//! twins serialized next to them.

use std::fmt::Write as _;

use labdx_core::imputation::ImputationTable;
use labdx_core::metrics::{mean_std, paired_t_test, stars, MetricsReport, TTest};
use labdx_core::Result;
use serde::{Deserialize, Serialize};

pub const METRIC_NAMES: [&str; 6] = [
    "Micro-F1",
    "Macro-F1",
    "Macro-F1(w)",
    "Micro-AUC",
    "Macro-AUC",
    "Macro-AUC(w)",
];

/// Published MIMIC-III reference points, quoted for orientation only.
pub const REFERENCE_VRNN_MICRO_F1: (f64, f64) = (0.426, 0.002);
pub const REFERENCE_VRNN_MSE: (f64, f64) = (0.370, 0.110);

pub fn pm(mean: f64, std: f64) -> String {
    if mean.is_finite() && std.is_finite() {
        format!("{mean:.3} ± {std:.3}")
    } else {
        "n/a".into()
    }
}

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4}")
    } else {
        "n/a".into()
    }
}

fn p_value(t: &TTest) -> String {
    if t.p < 1e-4 {
        "<1e-4".into()
    } else {
        format!("{:.4}", t.p)
    }
}

/// Stopping-protocol caveat carried by every report.
pub fn footer(patience: usize, max_epochs: usize) -> String {
    format!(
        "Protocol note: the published results state neither an epoch count nor a stopping rule. \
         These runs early-stop on dev macro-F1 (patience {patience}, at most {max_epochs} epochs; \
         dev objective for purely generative runs), so comparisons with published numbers are \
         indicative only. Published MIMIC-III reference: VRNN+NN micro-F1 {}, VRNN imputation MSE {}.\n",
        pm(REFERENCE_VRNN_MICRO_F1.0, REFERENCE_VRNN_MICRO_F1.1),
        pm(REFERENCE_VRNN_MSE.0, REFERENCE_VRNN_MSE.1),
    )
}

pub fn render_metrics(title: &str, report: &MetricsReport) -> String {
    let mut s = format!("{title}\n\n");
    for (name, v) in METRIC_NAMES.iter().zip(report.headline()) {
        let _ = writeln!(s, "{name:<14}{}", num(v));
    }
    let _ = writeln!(
        s,
        "\n{:<8}{:<16}{:>8}{:>8}{:>9}",
        "class", "name", "F1", "AUC", "support"
    );
    for row in &report.per_class {
        let auc = row.auc.map_or_else(|| "n/a".into(), num);
        let note = if row.no_support { "  (no support)" } else { "" };
        let _ = writeln!(
            s,
            "{:<8}{:<16}{:>8}{:>8}{:>9}{note}",
            row.class_id,
            row.name,
            num(row.f1),
            auc,
            row.support
        );
    }
    if !report.skipped_auc_classes.is_empty() {
        let _ = writeln!(
            s,
            "\nClasses left out of AUC averages: {:?}",
            report.skipped_auc_classes
        );
    }
    s
}

/// One model's six metrics over split seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub name: String,
    pub per_seed: Vec<[f64; 6]>,
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl SeedRow {
    pub fn new(name: impl Into<String>, per_seed: Vec<[f64; 6]>) -> Self {
        let mut mean = [0.0; 6];
        let mut std = [0.0; 6];
        for k in 0..6 {
            let xs: Vec<f64> = per_seed.iter().map(|r| r[k]).collect();
            (mean[k], std[k]) = mean_std(&xs);
        }
        Self {
            name: name.into(),
            per_seed,
            mean,
            std,
        }
    }

    pub fn metric(&self, k: usize) -> Vec<f64> {
        self.per_seed.iter().map(|r| r[k]).collect()
    }
}

/// `a` against `b` on one metric across paired seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub a: String,
    pub b: String,
    pub metric: String,
    pub test: TTest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisTable {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<SeedRow>,
    pub comparisons: Vec<SeedComparison>,
}

impl DiagnosisTable {
    /// Paired t-tests of `reference` against every other row on all six
    /// metrics. Undefined metric values skip the test.
    pub fn new(
        config_hash: String,
        seeds: Vec<u64>,
        rows: Vec<SeedRow>,
        reference: &str,
    ) -> Result<Self> {
        let mut comparisons = Vec::new();
        if seeds.len() >= 2 {
            if let Some(r) = rows.iter().find(|r| r.name == reference) {
                for other in rows.iter().filter(|o| o.name != reference) {
                    for (k, metric) in METRIC_NAMES.iter().enumerate() {
                        let (a, b) = (r.metric(k), other.metric(k));
                        if a.iter().chain(&b).all(|x| x.is_finite()) {
                            comparisons.push(SeedComparison {
                                a: r.name.clone(),
                                b: other.name.clone(),
                                metric: (*metric).into(),
                                test: paired_t_test(&a, &b)?,
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            config_hash,
            seeds,
            rows,
            comparisons,
        })
    }

    pub fn row(&self, name: &str) -> Option<&SeedRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn render(&self, title: &str) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(5)
            .max(5)
            + 2;
        let mut s = format!(
            "{title}\nsplit seeds: {:?}   config: {}\n\n",
            self.seeds, self.config_hash
        );
        let _ = write!(s, "{:<width$}", "Model");
        for m in METRIC_NAMES {
            let _ = write!(s, "{m:>17}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<width$}", r.name);
            for k in 0..6 {
                let _ = write!(s, "{:>17}", pm(r.mean[k], r.std[k]));
            }
            s.push('\n');
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(
                s,
                "\nPaired t-tests over split seeds (*** p<0.001, ** p<0.01, * p<0.05)\n"
            );
            for c in &self.comparisons {
                let _ = writeln!(
                    s,
                    "{} vs {:<width$}{:<14} diff {:+.4}  t {:>8.3}  p {:>7} {}",
                    c.a,
                    c.b,
                    c.metric,
                    c.test.mean_diff,
                    c.test.t,
                    p_value(&c.test),
                    stars(c.test.p)
                );
            }
        }
        s
    }
}

pub fn render_imputation(table: &ImputationTable, config_hash: &str) -> String {
    let mut s = format!(
        "Imputation error on hidden observations (MSE, normalized units)\nseeds: {:?}   config: {config_hash}\n\n",
        table.seeds
    );
    let _ = writeln!(s, "{:<12}{:>17}", "Method", "MSE");
    for r in &table.rows {
        let _ = writeln!(s, "{:<12}{:>17}", r.method, pm(r.mean, r.std));
    }
    if !table.comparisons.is_empty() {
        let _ = writeln!(
            s,
            "\nPaired t-tests over seeds (*** p<0.001, ** p<0.01, * p<0.05)\n"
        );
        for c in &table.comparisons {
            let _ = writeln!(
                s,
                "{:<10} vs {:<10} diff {:+.4}  t {:>8.3}  p {:>7} {}",
                c.method,
                c.reference,
                c.test.mean_diff,
                c.test.t,
                p_value(&c.test),
                stars(c.test.p)
            );
        }
    }
    s
}
