use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{
    AdamW, Baseline, BaselineParams, Batch, Checkpoint, ModelConfig, NeuralModel, TrainedModel,
};

use super::folds::stratified_kfold;
use super::metrics::{compute_metrics, f_beta, Metrics, MetricsReport, Scope};

/// Positive-class loss weight: `N_neg / N_pos` of the training data, or fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosWeight {
    Auto,
    Fixed(f64),
}

impl PosWeight {
    pub fn resolve(self, labels: &[bool]) -> f64 {
        match self {
            PosWeight::Fixed(w) => w,
            PosWeight::Auto => {
                let pos = labels.iter().filter(|&&l| l).count();
                if pos == 0 {
                    1.0
                } else {
                    (labels.len() - pos) as f64 / pos as f64
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PosWeightRepr {
    Name(String),
    Value(f64),
}

impl Serialize for PosWeight {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PosWeight::Auto => PosWeightRepr::Name("auto".into()),
            PosWeight::Fixed(w) => PosWeightRepr::Value(*w),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PosWeight {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PosWeightRepr::deserialize(d)? {
            PosWeightRepr::Name(n) if n == "auto" => Ok(PosWeight::Auto),
            PosWeightRepr::Name(n) => Err(serde::de::Error::custom(format!(
                "pos_weight must be \"auto\" or a number, got \"{n}\""
            ))),
            PosWeightRepr::Value(w) => Ok(PosWeight::Fixed(w)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub pos_weight: PosWeight,
    /// Decision threshold on `sigmoid(z)`.
    pub threshold: f64,
}

impl Hyperparameters {
    /// Article-corpus profile.
    pub fn evons() -> Self {
        Hyperparameters {
            lr: 1e-4,
            weight_decay: 0.01,
            dropout: 0.1,
            epochs: 50,
            batch_size: 32,
            pos_weight: PosWeight::Auto,
            threshold: 0.5,
        }
    }

    /// Tweet-series profile.
    pub fn fakenewsnet() -> Self {
        Hyperparameters {
            lr: 8e-5,
            epochs: 100,
            ..Hyperparameters::evons()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if let PosWeight::Fixed(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return bad(format!("pos_weight must be positive, got {w}"));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} outside (0, 1)", self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    F1,
    FBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionPolicy {
    pub criterion: Criterion,
    pub beta: f64,
}

impl SelectionPolicy {
    pub fn f1() -> Self {
        SelectionPolicy {
            criterion: Criterion::F1,
            beta: 1.0,
        }
    }

    pub fn f_beta(beta: f64) -> Self {
        SelectionPolicy {
            criterion: Criterion::FBeta,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.criterion == Criterion::F1 && self.beta != 1.0 {
            return Err(Error::Config(format!(
                "criterion f1 implies beta = 1, got {}",
                self.beta
            )));
        }
        Ok(())
    }

    pub fn score(&self, m: &Metrics) -> f64 {
        match self.criterion {
            Criterion::F1 => m.f1,
            Criterion::FBeta => f_beta(m.precision, m.recall, self.beta),
        }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.criterion {
            Criterion::F1 => f.write_str("f1"),
            Criterion::FBeta => write!(f, "f_beta(beta={})", self.beta),
        }
    }
}

/// Where epoch selection happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Select and report on the held-out fold.
    Heldout,
    /// Select on an inner stratified split of the training fold, report on
    /// the held-out fold.
    Nested,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Heldout => "heldout",
            Protocol::Nested => "nested",
        })
    }
}

/// Learning rate during epoch `epoch` of `epochs`, decayed linearly to zero.
pub fn lr_at(lr0: f64, epoch: usize, epochs: usize) -> f64 {
    lr0 * (1.0 - epoch as f64 / epochs as f64)
}

/// Inputs of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub index: usize,
    pub train: Batch,
    pub train_labels: Vec<bool>,
    pub heldout: Batch,
    pub heldout_labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    /// Metrics on the selection set.
    pub metrics: Metrics,
    pub selection_score: f64,
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub best_epoch: usize,
    pub selection_score: f64,
    pub pos_weight: f64,
    pub checkpoint: Checkpoint,
    pub trace: Vec<EpochRecord>,
    /// Held-out metrics of the selected checkpoint.
    pub report: MetricsReport,
}

/// Index of the record with the highest selection score; the earliest wins
/// ties.
pub fn select_epoch(trace: &[EpochRecord], policy: &SelectionPolicy) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, r) in trace.iter().enumerate() {
        let s = policy.score(&r.metrics);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

fn evaluate(model: &TrainedModel, batch: &Batch, labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    let scores = model.scores(batch)?;
    let pred: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    compute_metrics(&pred, &scores, labels)
}

const SHUFFLE_SALT: u64 = 0x5DEE_CE66_D1CE_4E5B;
const DROPOUT_SALT: u64 = 0xA076_1D64_78BD_642F;

/// Trains one model on a fold and keeps the epoch that maximizes the
/// selection criterion.
pub fn train_fold(
    config: &ModelConfig,
    data: &FoldData,
    hp: &Hyperparameters,
    policy: &SelectionPolicy,
    protocol: Protocol,
    baseline: &BaselineParams,
) -> Result<FoldOutcome> {
    hp.validate()?;
    policy.validate()?;
    let mut config = config.clone();
    config.dropout = hp.dropout;
    config.validate()?;

    let (train, train_labels, select, select_labels) = match protocol {
        Protocol::Heldout => (
            data.train.clone(),
            data.train_labels.clone(),
            data.heldout.clone(),
            data.heldout_labels.clone(),
        ),
        Protocol::Nested => {
            let inner = stratified_kfold(&data.train_labels, 9, config.seed)?;
            let s = &inner.splits[0];
            (
                data.train.select(&s.train),
                s.train.iter().map(|&i| data.train_labels[i]).collect(),
                data.train.select(&s.heldout),
                s.heldout.iter().map(|&i| data.train_labels[i]).collect(),
            )
        }
    };
    let pos_weight = hp.pos_weight.resolve(&train_labels);

    if config.family.is_baseline() {
        let flat = train.flat_features(config.view);
        let fitted = Baseline::fit(config.family, &flat, &train_labels, baseline, config.seed)?;
        let model = TrainedModel::Baseline {
            config: config.clone(),
            model: fitted,
        };
        let sel = evaluate(&model, &select, &select_labels, hp.threshold)?;
        let score = policy.score(&sel.metrics);
        let report = match protocol {
            Protocol::Heldout => sel.clone(),
            Protocol::Nested => evaluate(&model, &data.heldout, &data.heldout_labels, hp.threshold)?,
        };
        return Ok(FoldOutcome {
            fold: data.index,
            best_epoch: 0,
            selection_score: score,
            pos_weight,
            checkpoint: Checkpoint::from_trained(&model, 0, score),
            trace: vec![EpochRecord {
                epoch: 0,
                lr: 0.0,
                train_loss: None,
                metrics: sel.metrics,
                selection_score: score,
            }],
            report: report.with_scope(Scope::Fold(data.index)),
        });
    }

    let mut model = NeuralModel::new(config.clone())?;
    model.check_batch(&train)?;
    let mut opt = AdamW::new(&model.params, hp.weight_decay);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SALT);
    let n = train.size();
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(hp.epochs);
    let mut best: Option<(usize, f64, NeuralModel, MetricsReport)> = None;

    for epoch in 0..hp.epochs {
        let lr = lr_at(hp.lr, epoch, hp.epochs);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let batch = train.select(chunk);
            let labels: Vec<bool> = chunk.iter().map(|&i| train_labels[i]).collect();
            let (loss, grads) =
                model.loss_and_grads(&batch, &labels, pos_weight, Some(&mut dropout_rng))?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    message: format!("training loss became {loss}"),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut model.params, &grads, lr);
        }
        let scored = TrainedModel::Neural(model.clone());
        let sel = evaluate(&scored, &select, &select_labels, hp.threshold)?;
        let score = policy.score(&sel.metrics);
        trace.push(EpochRecord {
            epoch,
            lr,
            train_loss: Some(loss_sum / n as f64),
            metrics: sel.metrics,
            selection_score: score,
        });
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((epoch, score, model.clone(), sel));
        }
    }

    let (best_epoch, score, best_model, sel) = best.expect("at least one epoch");
    let report = match protocol {
        Protocol::Heldout => sel,
        Protocol::Nested => evaluate(
            &TrainedModel::Neural(best_model.clone()),
            &data.heldout,
            &data.heldout_labels,
            hp.threshold,
        )?,
    };
    Ok(FoldOutcome {
        fold: data.index,
        best_epoch,
        selection_score: score,
        pos_weight,
        checkpoint: Checkpoint::from_neural(&best_model, best_epoch, score),
        trace,
        report: report.with_scope(Scope::Fold(data.index)),
    })
}
