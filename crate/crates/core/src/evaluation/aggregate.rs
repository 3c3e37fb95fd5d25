use serde::{Deserialize, Serialize};

use super::metrics::{Metrics, MetricsReport};

/// Unweighted mean and population standard deviation over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateReport {
    pub n_folds: usize,
    pub mean: Metrics,
    pub std: Metrics,
    /// Degenerate-ratio flags raised in any fold, as `fold:metric`.
    pub degenerate: Vec<String>,
}

pub fn aggregate_folds(reports: &[MetricsReport]) -> AggregateReport {
    let n = reports.len();
    assert!(n > 0, "aggregate_folds needs at least one report");
    let values: Vec<[f64; 6]> = reports.iter().map(|r| r.metrics.values()).collect();
    // offsets from the first fold and pairwise differences keep identical
    // folds exact: mean equals the shared value, std is exactly zero
    let mut mean = [0.0; 6];
    let mut std = [0.0; 6];
    for m in 0..6 {
        let base = values[0][m];
        let offset: f64 = values.iter().map(|v| v[m] - base).sum::<f64>() / n as f64;
        mean[m] = base + offset;
        let mut pair_sq = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                pair_sq += (values[i][m] - values[j][m]).powi(2);
            }
        }
        std[m] = (pair_sq / (n * n) as f64).sqrt();
    }
    let degenerate = reports
        .iter()
        .flat_map(|r| r.degenerate.iter().map(move |d| format!("{}:{d}", r.scope)))
        .collect();
    AggregateReport {
        n_folds: n,
        mean: Metrics::from_values(mean),
        std: Metrics::from_values(std),
        degenerate,
    }
}
