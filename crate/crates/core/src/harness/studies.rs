use serde::{Deserialize, Serialize};

use crate::corpus::CorpusShape;
use crate::error::{Error, Result};
use crate::evaluation::Metrics;
use crate::features::EmbeddingStore;
use crate::models::InputView;

use super::config::ExperimentConfig;
use super::dataset::Dataset;
use super::report::{emit_report, ResultTable};
use super::run::{run_on_dataset, RunManifest};

pub const ABLATION_VIEWS: [InputView; 3] = [InputView::All, InputView::TextOnly, InputView::NumericOnly];
pub const SWEEP_LENGTHS: [usize; 6] = [2, 3, 5, 10, 20, 40];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Set when either input is constant; `r` is then reported as 0.
    pub zero_variance: bool,
}

/// Sample Pearson correlation.
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<Correlation> {
    if xs.len() != ys.len() {
        return Err(Error::Validation(format!(
            "pearson_r inputs differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::Validation("pearson_r needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(xs) || constant(ys) || sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation {
            r: 0.0,
            zero_variance: true,
        });
    }
    Ok(Correlation {
        r: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0),
        zero_variance: false,
    })
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub table: ResultTable,
    pub manifests: Vec<RunManifest>,
}

fn require_series(base: &ExperimentConfig, dataset: &Dataset, study: &str) -> Result<()> {
    if base.data.shape() != CorpusShape::Series || dataset.shape() != CorpusShape::Series {
        return Err(Error::Config(format!("the {study} needs a series corpus")));
    }
    Ok(())
}

/// One run per view with identical folds and seeds.
pub fn run_ablation(
    base: &ExperimentConfig,
    dataset: &Dataset,
    views: &[InputView],
) -> Result<StudyResult> {
    require_series(base, dataset, "ablation")?;
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for &view in views {
        let mut cfg = base.clone();
        cfg.model.view = view;
        cfg.name = format!("{}-{view}", base.name);
        cfg.output_dir = base.output_dir.join(view.name());
        let out = run_on_dataset(&cfg, dataset)?;
        rows.push(out.row);
        manifests.push(out.manifest);
    }
    if manifests.windows(2).any(|w| w[0].folds_hash != w[1].folds_hash) {
        return Err(Error::Run("ablation runs did not share fold assignments".into()));
    }
    let table = ResultTable::new(rows);
    emit_report(&table, &base.output_dir, "ablation")?;
    Ok(StudyResult { table, manifests })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub lengths: Vec<usize>,
    pub f1: Vec<f64>,
    pub correlation: Correlation,
    pub study: StudyResult,
}

/// One run per series length plus the correlation between length and mean F1.
pub fn run_length_sweep(
    base: &ExperimentConfig,
    dataset: &Dataset,
    lengths: &[usize],
) -> Result<SweepResult> {
    require_series(base, dataset, "length sweep")?;
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for &len in lengths {
        let mut cfg = base.clone();
        cfg.model.max_len = len;
        cfg.name = format!("{}-len{len}", base.name);
        cfg.output_dir = base.output_dir.join(format!("len_{len:02}"));
        let out = run_on_dataset(&cfg, dataset)?;
        if let Some(f) = out.manifest.folds.iter().find(|f| f.input_shape.get(1) != Some(&len)) {
            return Err(Error::Run(format!(
                "fold {} ran with input shape {:?}, expected length {len}",
                f.index, f.input_shape
            )));
        }
        rows.push(out.row);
        manifests.push(out.manifest);
    }
    let xs: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    let f1: Vec<f64> = rows.iter().map(|r| r.mean.f1).collect();
    let correlation = pearson_r(&xs, &f1)?;
    let table = ResultTable::new(rows);
    emit_report(&table, &base.output_dir, "sweep")?;
    let summary = serde_json::json!({
        "lengths": lengths,
        "f1": f1,
        "pearson_r": correlation.r,
        "zero_variance": correlation.zero_variance,
    });
    let path = base.output_dir.join("sweep_correlation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    Ok(SweepResult {
        lengths: lengths.to_vec(),
        f1,
        correlation,
        study: StudyResult { table, manifests },
    })
}

#[derive(Debug, Clone)]
pub struct SwapResult {
    /// `store_b` minus `store_a`, per metric mean.
    pub deltas: Metrics,
    pub study: StudyResult,
}

/// Two runs that differ only in the embedding store.
pub fn run_embedding_swap(
    base: &ExperimentConfig,
    dataset_a: &Dataset,
    store_b: EmbeddingStore,
) -> Result<SwapResult> {
    let dataset_b = dataset_a.with_store(store_b)?;
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for (tag, ds) in [("a", dataset_a), ("b", &dataset_b)] {
        let mut cfg = base.clone();
        cfg.name = format!("{}-store-{tag}", base.name);
        cfg.output_dir = base.output_dir.join(format!("store_{tag}"));
        let mut out = run_on_dataset(&cfg, ds)?;
        out.row.model = format!("{} ({}d)", out.row.model, ds.store.dim());
        rows.push(out.row);
        manifests.push(out.manifest);
    }
    let a = rows[0].mean.values();
    let b = rows[1].mean.values();
    let deltas = Metrics::from_values(std::array::from_fn(|i| b[i] - a[i]));
    let table = ResultTable::new(rows);
    emit_report(&table, &base.output_dir, "swap")?;
    let path = base.output_dir.join("swap_deltas.json");
    std::fs::write(&path, serde_json::to_string_pretty(&deltas)?).map_err(|e| Error::io(&path, e))?;
    Ok(SwapResult {
        deltas,
        study: StudyResult { table, manifests },
    })
}
