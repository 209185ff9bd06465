//! Classification metrics, per-class reports and paired t-tests.

mod classification;
mod ttest;

pub use classification::{
    auc_scores, binary_auc, evaluate, f1_scores, per_class_report, AucScores, ClassRow, F1Scores,
    MetricsReport, PerClassReport, PredictionSet,
};
pub use ttest::{paired_t_test, regularized_incomplete_beta, stars, student_t_two_sided_p, TTest};

/// Mean and sample standard deviation (`n − 1`; 0 for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}
