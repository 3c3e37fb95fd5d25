use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column order used everywhere metrics are listed.
pub const METRIC_NAMES: [&str; 6] = ["accuracy", "balanced_accuracy", "f1", "precision", "recall", "roc_auc"];

/// The six positive-class metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metrics {
    pub accuracy: f64,
    pub balanced_accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub roc_auc: f64,
}

impl Metrics {
    pub fn values(&self) -> [f64; 6] {
        [
            self.accuracy,
            self.balanced_accuracy,
            self.f1,
            self.precision,
            self.recall,
            self.roc_auc,
        ]
    }

    pub fn from_values(v: [f64; 6]) -> Self {
        Metrics {
            accuracy: v[0],
            balanced_accuracy: v[1],
            f1: v[2],
            precision: v[3],
            recall: v[4],
            roc_auc: v[5],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values()[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Fold(usize),
    Aggregate,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Fold(i) => write!(f, "fold {i}"),
            Scope::Aggregate => f.write_str("aggregate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub scope: Scope,
    pub metrics: Metrics,
    pub confusion: Confusion,
    /// Names of metrics whose ratio was undefined and reported as 0.
    pub degenerate: Vec<String>,
}

impl MetricsReport {
    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }
}

fn ratio(num: usize, den: usize, name: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(1 + b^2) P R / (b^2 P + R)`, or 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / den
    }
}

/// Area under the ROC curve from midranks: the fraction of
/// (positive, negative) pairs ordered correctly, ties counting one half.
/// `None` when either class is absent.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the midrank keeps every value integral
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            if truth[k] {
                pos_rank_sum2 += twice_mid;
            }
        }
        i = j + 1;
    }
    let p = n_pos as u64;
    let twice_u = pos_rank_sum2 - p * (p + 1);
    Some(twice_u as f64 / 2.0 / (n_pos * n_neg) as f64)
}

/// Scores `predicted` against `truth`; `scores` feed ROC-AUC.
pub fn compute_metrics(predicted: &[bool], scores: &[f64], truth: &[bool]) -> Result<MetricsReport> {
    if predicted.len() != truth.len() || scores.len() != truth.len() {
        return Err(Error::Validation(format!(
            "metric inputs differ in length: {} predictions, {} scores, {} labels",
            predicted.len(),
            scores.len(),
            truth.len()
        )));
    }
    let mut c = Confusion::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let mut flags = Vec::new();
    let accuracy = ratio(c.tp + c.tn, truth.len(), "accuracy", &mut flags);
    let tpr = ratio(c.tp, c.tp + c.fn_, "recall", &mut flags);
    let tnr = ratio(c.tn, c.tn + c.fp, "specificity", &mut flags);
    let precision = ratio(c.tp, c.tp + c.fp, "precision", &mut flags);
    let f1 = if precision + tpr > 0.0 {
        2.0 * precision * tpr / (precision + tpr)
    } else {
        flags.push("f1".into());
        0.0
    };
    let auc = roc_auc(scores, truth).unwrap_or_else(|| {
        flags.push("roc_auc".into());
        0.0
    });
    Ok(MetricsReport {
        scope: Scope::Aggregate,
        metrics: Metrics {
            accuracy,
            balanced_accuracy: (tpr + tnr) / 2.0,
            f1,
            precision,
            recall: tpr,
            roc_auc: auc,
        },
        confusion: c,
        degenerate: flags,
    })
}
