use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::Family;
use super::graph::sigmoid;
use super::tensor::{dot, Tensor};

/// Settings shared by the classical baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineParams {
    /// Inverse L2 strength of the logistic model.
    pub c: f64,
    pub linear_iters: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        BaselineParams {
            c: 1.0,
            linear_iters: 300,
            n_trees: 50,
            max_depth: 10,
            min_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// `usize::MAX` marks a leaf.
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Fraction of positives among the training rows that reached the node.
    pub positive: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.feature == usize::MAX {
                return n.positive;
            }
            i = if x[n.feature] <= n.threshold { n.left } else { n.right };
        }
    }
}

/// A fitted classical baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Baseline {
    DummyStratified {
        prior: f64,
        seed: u64,
    },
    Linear {
        mean: Vec<f64>,
        scale: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    },
    TreeEnsemble {
        trees: Vec<Tree>,
    },
}

fn both_classes(y: &[bool], family: Family) -> Result<()> {
    let pos = y.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Validation(format!(
            "`{family}` needs both classes in the training data"
        )));
    }
    Ok(())
}

impl Baseline {
    pub fn fit(
        family: Family,
        x: &Tensor,
        y: &[bool],
        params: &BaselineParams,
        seed: u64,
    ) -> Result<Baseline> {
        if x.rows == 0 || x.rows != y.len() {
            return Err(Error::Validation(format!(
                "baseline needs a non-empty training set with one label per row ({} rows, {} labels)",
                x.rows,
                y.len()
            )));
        }
        match family {
            Family::DummyStratified => Ok(Baseline::DummyStratified {
                prior: y.iter().filter(|&&l| l).count() as f64 / y.len() as f64,
                seed,
            }),
            Family::Linear => {
                both_classes(y, family)?;
                Ok(fit_logistic(x, y, params))
            }
            Family::TreeEnsemble => {
                both_classes(y, family)?;
                Ok(fit_forest(x, y, params, seed))
            }
            other => Err(Error::Config(format!("`{other}` is not a classical baseline"))),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Baseline::DummyStratified { .. } => Family::DummyStratified,
            Baseline::Linear { .. } => Family::Linear,
            Baseline::TreeEnsemble { .. } => Family::TreeEnsemble,
        }
    }

    /// Positive-class scores in `[0, 1]`.
    pub fn scores(&self, x: &Tensor) -> Vec<f64> {
        match self {
            Baseline::DummyStratified { prior, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                (0..x.rows)
                    .map(|_| if rng.random::<f64>() < *prior { 1.0 } else { 0.0 })
                    .collect()
            }
            Baseline::Linear {
                mean,
                scale,
                weights,
                bias,
            } => (0..x.rows)
                .map(|r| {
                    let z: f64 = x
                        .row(r)
                        .iter()
                        .zip(mean)
                        .zip(scale)
                        .zip(weights)
                        .map(|(((v, m), s), w)| (v - m) / s * w)
                        .sum();
                    sigmoid(z + bias)
                })
                .collect(),
            Baseline::TreeEnsemble { trees } => (0..x.rows)
                .map(|r| {
                    let votes = trees
                        .iter()
                        .filter(|t| t.leaf_value(x.row(r)) > 0.5)
                        .count();
                    votes as f64 / trees.len() as f64
                })
                .collect(),
        }
    }

    /// Labels at the 0.5 score threshold.
    pub fn predict(&self, x: &Tensor) -> Vec<bool> {
        self.scores(x).into_iter().map(|s| s >= 0.5).collect()
    }
}

/// Fits `kind` on the training rows and scores the test rows.
pub fn classical_baseline_fit_predict(
    kind: Family,
    train_x: &Tensor,
    train_y: &[bool],
    test_x: &Tensor,
    params: &BaselineParams,
    seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let model = Baseline::fit(kind, train_x, train_y, params, seed)?;
    if test_x.cols != train_x.cols {
        return Err(Error::Config(format!(
            "test rows have {} features, training rows {}",
            test_x.cols, train_x.cols
        )));
    }
    let scores = model.scores(test_x);
    let labels = scores.iter().map(|&s| s >= 0.5).collect();
    Ok((scores, labels))
}

/// L2-regularized logistic regression on standardized features, fitted with
/// full-batch Adam on `sum(logloss) * c + |w|^2 / 2`, scaled by `1 / n`.
fn fit_logistic(x: &Tensor, y: &[bool], params: &BaselineParams) -> Baseline {
    let (n, d) = x.shape();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut scale = vec![0.0; d];
    for r in 0..n {
        for ((s, v), m) in scale.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    scale.iter_mut().for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
    let z: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            x.row(r)
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect()
        })
        .collect();
    let lambda = 1.0 / (params.c * n as f64);
    let mut w = vec![0.0; d + 1];
    let (mut m1, mut m2) = (vec![0.0; d + 1], vec![0.0; d + 1]);
    let lr = 0.05;
    for it in 1..=params.linear_iters {
        let mut g = vec![0.0; d + 1];
        for (row, &label) in z.iter().zip(y) {
            let p = sigmoid(dot(row, &w[..d]) + w[d]);
            let err = (p - if label { 1.0 } else { 0.0 }) / n as f64;
            g[..d].iter_mut().zip(row).for_each(|(gi, v)| *gi += err * v);
            g[d] += err;
        }
        for i in 0..d {
            g[i] += lambda * w[i];
        }
        let t = it as i32;
        for i in 0..=d {
            m1[i] = 0.9 * m1[i] + 0.1 * g[i];
            m2[i] = 0.999 * m2[i] + 0.001 * g[i] * g[i];
            let mh = m1[i] / (1.0 - 0.9f64.powi(t));
            let vh = m2[i] / (1.0 - 0.999f64.powi(t));
            w[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    Baseline::Linear {
        mean,
        scale,
        weights: w,
        bias,
    }
}

fn gini(pos: f64, total: f64) -> f64 {
    if total == 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    x: &'a Tensor,
    y: &'a [bool],
    params: &'a BaselineParams,
    n_features: usize,
    nodes: Vec<TreeNode>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let total = rows.len() as f64;
        let pos = rows.iter().filter(|&&r| self.y[r]).count() as f64;
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: usize::MAX,
            threshold: 0.0,
            left: 0,
            right: 0,
            positive: pos / total,
        });
        if depth >= self.params.max_depth
            || pos == 0.0
            || pos == total
            || rows.len() < 2 * self.params.min_leaf
        {
            return id;
        }
        let d = self.x.cols;
        let mut features: Vec<usize> = (0..d).collect();
        features.shuffle(rng);
        let parent = gini(pos, total);
        let mut best: Option<(f64, usize, f64)> = None;
        for &f in features.iter().take(self.n_features) {
            rows.sort_by(|&a, &b| self.x.at(a, f).total_cmp(&self.x.at(b, f)).then(a.cmp(&b)));
            let mut left_pos = 0.0;
            for i in 0..rows.len() - 1 {
                if self.y[rows[i]] {
                    left_pos += 1.0;
                }
                let (lo, hi) = (self.x.at(rows[i], f), self.x.at(rows[i + 1], f));
                let nl = (i + 1) as f64;
                if lo == hi || (i + 1) < self.params.min_leaf || rows.len() - i - 1 < self.params.min_leaf {
                    continue;
                }
                let nr = total - nl;
                let impurity = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / total;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let split = partition(rows, |r| self.x.at(r, feature) <= threshold);
        let (left_rows, right_rows) = rows.split_at_mut(split);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        let node = &mut self.nodes[id];
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
        id
    }
}

/// Stable in-place partition; returns the count of rows satisfying `pred`.
fn partition(rows: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| pred(r));
    let k = yes.len();
    rows[..k].copy_from_slice(&yes);
    rows[k..].copy_from_slice(&no);
    k
}

fn fit_forest(x: &Tensor, y: &[bool], params: &BaselineParams, seed: u64) -> Baseline {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.rows;
    let n_features = ((x.cols as f64).sqrt().round() as usize).clamp(1, x.cols.max(1));
    let trees = (0..params.n_trees.max(1))
        .map(|_| {
            let mut rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut b = TreeBuilder {
                x,
                y,
                params,
                n_features,
                nodes: Vec::new(),
            };
            b.grow(&mut rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Baseline::TreeEnsemble { trees }
}
