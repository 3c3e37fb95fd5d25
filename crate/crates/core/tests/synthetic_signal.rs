//! Planted signal in synthetic corpora, seen through a linear probe.

use newsbench::corpus::{
    description_key, generate_synthetic_corpus, title_key, Corpus, CorpusShape, SignalPlacement,
    SyntheticSpec,
};
use newsbench::evaluation::roc_auc;
use newsbench::labeling::Task;
use newsbench::models::{classical_baseline_fit_predict, BaselineParams, Family, Tensor};

fn spec(strength: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_items: 400,
        task: Task::Veracity,
        corpus_shape: CorpusShape::Article,
        positive_rate: 0.5,
        text_signal_strength: strength,
        numeric_signal_strength: 0.0,
        embedding_dim: 8,
        series_length_range: (1, 1),
        signal_placement: SignalPlacement::EveryTweet,
        seed,
    }
}

/// Held-out ROC-AUC of a linear probe on `[title ; description]` embeddings,
/// trained on the first half.
fn probe_auc(strength: f64, seed: u64) -> f64 {
    let g = generate_synthetic_corpus(&spec(strength, seed)).unwrap();
    let Corpus::Articles(arts) = &g.corpus else {
        unreachable!()
    };
    let d = g.store.dim();
    let mut data = Vec::new();
    for a in arts {
        data.extend_from_slice(g.store.get(&title_key(&a.id)).unwrap());
        data.extend_from_slice(g.store.get(&description_key(&a.id)).unwrap());
    }
    let x = Tensor::from_vec(arts.len(), 2 * d, data);
    let half = arts.len() / 2;
    let rows = |r: std::ops::Range<usize>| {
        Tensor::from_vec(r.len(), 2 * d, x.data[r.start * 2 * d..r.end * 2 * d].to_vec())
    };
    let (scores, _) = classical_baseline_fit_predict(
        Family::Linear,
        &rows(0..half),
        &g.labels[..half],
        &rows(half..arts.len()),
        &BaselineParams::default(),
        seed,
    )
    .unwrap();
    roc_auc(&scores, &g.labels[half..]).unwrap()
}

fn mean_auc(strength: f64) -> f64 {
    (0..10).map(|s| probe_auc(strength, 40 + s)).sum::<f64>() / 10.0
}

#[test]
fn no_planted_signal_is_chance() {
    let auc = mean_auc(0.0);
    assert!((auc - 0.5).abs() < 0.05, "mean AUC {auc}");
}

#[test]
fn probe_auc_grows_with_text_signal() {
    let levels = [0.25, 1.0, 2.0].map(mean_auc);
    assert!(levels[0] <= levels[1] && levels[1] <= levels[2], "{levels:?}");
    assert!(levels[2] > 0.75, "{levels:?}");
}
