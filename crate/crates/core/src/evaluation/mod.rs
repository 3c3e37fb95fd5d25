//! Weighted loss, stratified folds, per-fold training with epoch selection,
//! the six-metric report and fold aggregation.

mod aggregate;
mod folds;
mod loss;
mod metrics;
mod training;

pub use aggregate::{aggregate_folds, AggregateReport};
pub use folds::{stratified_kfold, FoldSplit, Folds};
pub use loss::{weighted_bce, weighted_bce_mean};
pub use metrics::{compute_metrics, f_beta, roc_auc, Confusion, Metrics, MetricsReport, Scope, METRIC_NAMES};
pub use training::{
    lr_at, select_epoch, train_fold, Criterion, EpochRecord, FoldData, FoldOutcome, Hyperparameters,
    PosWeight, Protocol, SelectionPolicy,
};

#[cfg(test)]
mod tests;
