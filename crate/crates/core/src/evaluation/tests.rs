use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::error::Error;
use crate::models::{BaselineParams, Batch, Family, ModelConfig, Tensor, TrainedModel, Widths};

fn data(n: usize, d: usize, seed: u64) -> (Batch, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let labels = (0..n).map(|r| x[r * d] + 0.5 * x[r * d + 1] > 0.3).collect();
    (
        Batch::Vectors {
            x: Tensor::from_vec(n, d, x),
            source: vec![0; n],
            eng: vec![0.0; n],
        },
        labels,
    )
}

fn fold(seed: u64) -> FoldData {
    let (train, train_labels) = data(80, 4, seed);
    let (heldout, heldout_labels) = data(40, 4, seed + 1000);
    FoldData {
        index: 3,
        train,
        train_labels,
        heldout,
        heldout_labels,
    }
}

fn hp(epochs: usize) -> Hyperparameters {
    Hyperparameters {
        lr: 1e-2,
        epochs,
        batch_size: 16,
        ..Hyperparameters::evons()
    }
}

#[test]
fn profiles() {
    let e = Hyperparameters::evons();
    assert_eq!((e.lr, e.weight_decay, e.dropout, e.epochs), (1e-4, 0.01, 0.1, 50));
    let f = Hyperparameters::fakenewsnet();
    assert_eq!((f.lr, f.weight_decay, f.dropout, f.epochs), (8e-5, 0.01, 0.1, 100));
}

#[test]
fn scheduler_contract() {
    for epochs in [1, 7, 50] {
        for e in 0..epochs {
            let expected = 1e-4 * (1.0 - e as f64 / epochs as f64);
            assert!((lr_at(1e-4, e, epochs) - expected).abs() < 1e-18);
        }
        assert!(lr_at(1e-4, epochs - 1, epochs) <= 1e-4 / epochs as f64 + 1e-18);
    }
}

#[test]
fn train_fold_selects_the_best_epoch() {
    let cfg = ModelConfig::new(Family::Mlp, 4, Widths::tiny(), 9);
    let out = train_fold(&cfg, &fold(1), &hp(12), &SelectionPolicy::f1(), Protocol::Heldout, &BaselineParams::default()).unwrap();
    assert_eq!(out.trace.len(), 12);
    assert_eq!(out.fold, 3);
    for (e, r) in out.trace.iter().enumerate() {
        assert!(out.selection_score >= r.selection_score);
        assert_eq!(r.lr, lr_at(1e-2, e, 12));
    }
    let first_best = out.trace.iter().position(|r| r.selection_score == out.selection_score).unwrap();
    assert_eq!(out.best_epoch, first_best);
    assert_eq!(out.checkpoint.epoch, out.best_epoch);
    assert_eq!(out.report.metrics, out.trace[out.best_epoch].metrics);
    assert_eq!(out.report.scope, Scope::Fold(3));
    assert!(out.report.metrics.f1 > 0.7, "{:?}", out.report.metrics);
    // reloaded checkpoint reproduces the reported metrics
    let model = out.checkpoint.model().unwrap();
    let scores = model.scores(&fold(1).heldout).unwrap();
    let pred: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
    let again = compute_metrics(&pred, &scores, &fold(1).heldout_labels).unwrap();
    assert_eq!(again.metrics, out.report.metrics);
}

#[test]
fn train_fold_is_deterministic() {
    let cfg = ModelConfig::new(Family::MlpGating, 4, Widths::tiny(), 2);
    let run = || {
        let o = train_fold(&cfg, &fold(2), &hp(4), &SelectionPolicy::f_beta(2.0), Protocol::Heldout, &BaselineParams::default()).unwrap();
        (o.trace, o.checkpoint)
    };
    assert_eq!(run(), run());
}

#[test]
fn selection_ties_prefer_earliest() {
    let rec = |e: usize, f1: f64| EpochRecord {
        epoch: e,
        lr: 0.0,
        train_loss: None,
        metrics: Metrics { f1, ..Metrics::default() },
        selection_score: f1,
    };
    let trace = vec![rec(0, 0.2), rec(1, 0.6), rec(2, 0.6), rec(3, 0.1)];
    assert_eq!(select_epoch(&trace, &SelectionPolicy::f1()), 1);
}

#[test]
fn divergence_reports_epoch() {
    let cfg = ModelConfig::new(Family::Mlp, 4, Widths::tiny(), 1);
    let mut h = hp(3);
    h.pos_weight = PosWeight::Fixed(f64::MAX);
    let err = train_fold(&cfg, &fold(3), &h, &SelectionPolicy::f1(), Protocol::Heldout, &BaselineParams::default()).unwrap_err();
    assert!(matches!(err, Error::Divergence { epoch: 0, .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn invalid_settings_are_config_errors() {
    let cfg = ModelConfig::new(Family::Mlp, 4, Widths::tiny(), 1);
    let mut h = hp(3);
    h.dropout = 1.5;
    let r = train_fold(&cfg, &fold(3), &h, &SelectionPolicy::f1(), Protocol::Heldout, &BaselineParams::default());
    assert!(matches!(r, Err(Error::Config(_))));
    let r = train_fold(&cfg, &fold(3), &hp(3), &SelectionPolicy::f_beta(0.0), Protocol::Heldout, &BaselineParams::default());
    assert!(matches!(r, Err(Error::Config(_))));
}

#[test]
fn nested_protocol_reports_heldout() {
    let cfg = ModelConfig::new(Family::Mlp, 4, Widths::tiny(), 4);
    let f = fold(4);
    let out = train_fold(&cfg, &f, &hp(5), &SelectionPolicy::f1(), Protocol::Nested, &BaselineParams::default()).unwrap();
    let TrainedModel::Neural(m) = out.checkpoint.model().unwrap() else { panic!() };
    let scores: Vec<f64> = TrainedModel::Neural(m).scores(&f.heldout).unwrap();
    let pred: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
    assert_eq!(compute_metrics(&pred, &scores, &f.heldout_labels).unwrap().metrics, out.report.metrics);
}

#[test]
fn baselines_train_in_one_step() {
    for family in [Family::DummyStratified, Family::Linear, Family::TreeEnsemble] {
        let cfg = ModelConfig::new(family, 4, Widths::tiny(), 4);
        let out = train_fold(&cfg, &fold(5), &hp(5), &SelectionPolicy::f1(), Protocol::Heldout, &BaselineParams::default()).unwrap();
        assert_eq!(out.trace.len(), 1);
        if family != Family::DummyStratified {
            assert!(out.report.metrics.accuracy > 0.75, "{family}: {:?}", out.report.metrics);
        }
    }
}

#[test]
fn pos_weight_auto_is_class_ratio() {
    let labels = [true, false, false, false, true, false];
    assert_eq!(PosWeight::Auto.resolve(&labels), 2.0);
    assert_eq!(PosWeight::Fixed(3.5).resolve(&labels), 3.5);
    let json = serde_json::to_string(&PosWeight::Auto).unwrap();
    assert_eq!(serde_json::from_str::<PosWeight>(&json).unwrap(), PosWeight::Auto);
    assert_eq!(serde_json::from_str::<PosWeight>("19.0").unwrap(), PosWeight::Fixed(19.0));
    assert!(serde_json::from_str::<PosWeight>("\"max\"").is_err());
}
