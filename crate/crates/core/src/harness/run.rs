use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusShape;
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_folds, stratified_kfold, train_fold, AggregateReport, EpochRecord, FoldSplit,
    Hyperparameters, MetricsReport, Protocol,
};
use crate::labeling::{ImbalanceReport, LabelRule};
use crate::models::{ModelConfig, INIT_SCHEME};

use super::config::ExperimentConfig;
use super::dataset::{prepare_fold, sha256_hex, Dataset};
use super::report::{emit_report, ResultTable, TableRow};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldRecord {
    pub index: usize,
    pub fold_hash: String,
    pub n_train: usize,
    pub n_heldout: usize,
    pub heldout_positives: usize,
    pub input_shape: Vec<usize>,
    pub model_seed: u64,
    pub pos_weight: f64,
    pub best_epoch: usize,
    pub selection_score: f64,
    pub report: MetricsReport,
    pub trace: Vec<EpochRecord>,
    pub checkpoint: Option<PathBuf>,
    pub diagnostics: Vec<String>,
}

/// Everything needed to reproduce one table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub status: RunStatus,
    pub error: Option<String>,
    pub name: String,
    pub config: ExperimentConfig,
    pub dataset_hash: String,
    pub n_items: usize,
    pub label_rule: LabelRule,
    pub label_diagnostics: Vec<String>,
    pub imbalance: ImbalanceReport,
    pub profile: String,
    pub hyperparameters: Hyperparameters,
    pub selection: String,
    pub protocol: Protocol,
    pub init_scheme: String,
    pub folds_hash: String,
    pub fold_warnings: Vec<String>,
    pub folds: Vec<FoldRecord>,
    pub aggregate: Option<AggregateReport>,
    pub row: Option<TableRow>,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub row: TableRow,
}

/// Seed of the model trained on fold `fold`.
pub fn model_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(fold as u64)
}

pub fn model_label(config: &ExperimentConfig) -> String {
    let family = config.model.family;
    match config.data.shape() {
        CorpusShape::Article => family.to_string(),
        CorpusShape::Series => format!(
            "{family} [{}, len {}]",
            config.model.view, config.model.max_len
        ),
    }
}

pub fn dataset_label(config: &ExperimentConfig) -> String {
    format!("{}/{}", config.data.describe(), config.labels.task)
}

fn base_model_config(config: &ExperimentConfig) -> Result<ModelConfig> {
    let mut m = ModelConfig::new(
        config.model.family,
        1,
        config.model.widths.resolve()?,
        config.seed,
    );
    m.view = config.model.view;
    m.max_len = config.model.max_len.max(1);
    Ok(m)
}

/// Loads the data and runs stratified cross-validation; writes the manifest,
/// tables and, if enabled, per-fold checkpoints under `output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let dataset = Dataset::load(&config.data, &config.labels).inspect_err(|e| {
        let _ = failed_manifest(config, None, Vec::new(), Vec::new(), String::new(), e)
            .write(&config.output_dir);
    })?;
    run_on_dataset(config, &dataset)
}

fn failed_manifest(
    config: &ExperimentConfig,
    dataset: Option<&Dataset>,
    folds: Vec<FoldRecord>,
    fold_warnings: Vec<String>,
    folds_hash: String,
    err: &Error,
) -> RunManifest {
    let rule = config.labels.rule();
    RunManifest {
        status: RunStatus::Failed,
        error: Some(err.to_string()),
        name: config.name.clone(),
        config: config.clone(),
        dataset_hash: dataset.map(|d| d.hash.clone()).unwrap_or_default(),
        n_items: dataset.map(|d| d.labels.len()).unwrap_or(0),
        label_rule: dataset.map(|d| d.labeling.rule.clone()).unwrap_or(rule),
        label_diagnostics: dataset.map(|d| d.labeling.diagnostics.clone()).unwrap_or_default(),
        imbalance: dataset.map(|d| d.imbalance.clone()).unwrap_or(ImbalanceReport {
            n: 0,
            n_positive: 0,
            prevalence: 0.0,
            pos_weight: None,
            expected_dummy_f1: 0.0,
            degenerate: true,
        }),
        profile: config.training.profile_name().into(),
        hyperparameters: config.training.resolve(),
        selection: config.selection.to_string(),
        protocol: config.evaluation.protocol,
        init_scheme: INIT_SCHEME.into(),
        folds_hash,
        fold_warnings,
        folds,
        aggregate: None,
        row: None,
    }
}

/// Runs on an already loaded dataset, so studies can share embeddings and
/// fitted labels.
pub fn run_on_dataset(config: &ExperimentConfig, dataset: &Dataset) -> Result<RunOutcome> {
    config.validate()?;
    if dataset.shape() != config.data.shape() {
        return Err(Error::Config(format!(
            "config expects a {:?} corpus but the dataset is {:?}",
            config.data.shape(),
            dataset.shape()
        )));
    }
    let out = &config.output_dir;
    let hp = config.training.resolve();
    let base = base_model_config(config)?;

    let folds = match stratified_kfold(&dataset.labels, config.evaluation.folds, config.seed) {
        Ok(f) => f,
        Err(e) => {
            failed_manifest(config, Some(dataset), Vec::new(), Vec::new(), String::new(), &e).write(out)?;
            return Err(e);
        }
    };
    for w in &folds.warnings {
        log::warn!("{w}");
    }
    let fold_hashes: Vec<String> = folds.splits.iter().map(|s| dataset.fold_hash(s)).collect();
    let folds_hash = sha256_hex(&[fold_hashes.join("\n").as_bytes()]);
    let ck_dir = out.join("checkpoints");
    if config.evaluation.write_checkpoints {
        std::fs::create_dir_all(&ck_dir).map_err(|e| Error::io(&ck_dir, e))?;
    }

    let run_fold = |split: &FoldSplit| -> Result<FoldRecord> {
        let mut mc = base.clone();
        mc.seed = model_seed(config.seed, split.index);
        let prepared = prepare_fold(dataset, split, &mc)?;
        let outcome = train_fold(
            &prepared.config,
            &prepared.data,
            &hp,
            &config.selection,
            config.evaluation.protocol,
            &config.evaluation.baseline,
        )?;
        let checkpoint = if config.evaluation.write_checkpoints {
            let name = format!("fold_{:02}.json", split.index);
            outcome.checkpoint.save(ck_dir.join(&name))?;
            Some(PathBuf::from("checkpoints").join(name))
        } else {
            None
        };
        log::info!(
            "{}: fold {} best epoch {} score {:.4}",
            config.name,
            split.index,
            outcome.best_epoch,
            outcome.selection_score
        );
        Ok(FoldRecord {
            index: split.index,
            fold_hash: fold_hashes[split.index].clone(),
            n_train: split.train.len(),
            n_heldout: split.heldout.len(),
            heldout_positives: prepared.data.heldout_labels.iter().filter(|&&l| l).count(),
            input_shape: prepared.input_shape,
            model_seed: mc.seed,
            pos_weight: outcome.pos_weight,
            best_epoch: outcome.best_epoch,
            selection_score: outcome.selection_score,
            report: outcome.report,
            trace: outcome.trace,
            checkpoint,
            diagnostics: prepared.diagnostics,
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Run(format!("worker pool: {e}")))?;
    let results: Vec<Result<FoldRecord>> =
        pool.install(|| folds.splits.par_iter().map(run_fold).collect());

    let mut records = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = first_err {
        failed_manifest(config, Some(dataset), records, folds.warnings.clone(), folds_hash, &e)
            .write(out)?;
        return Err(e);
    }

    let reports: Vec<MetricsReport> = records.iter().map(|r| r.report.clone()).collect();
    let aggregate = aggregate_folds(&reports);
    let row = TableRow::new(dataset_label(config), model_label(config), &aggregate);
    let manifest = RunManifest {
        status: RunStatus::Completed,
        error: None,
        name: config.name.clone(),
        config: config.clone(),
        dataset_hash: dataset.hash.clone(),
        n_items: dataset.labels.len(),
        label_rule: dataset.labeling.rule.clone(),
        label_diagnostics: dataset.labeling.diagnostics.clone(),
        imbalance: dataset.imbalance.clone(),
        profile: config.training.profile_name().into(),
        hyperparameters: hp,
        selection: config.selection.to_string(),
        protocol: config.evaluation.protocol,
        init_scheme: INIT_SCHEME.into(),
        folds_hash,
        fold_warnings: folds.warnings,
        folds: records,
        aggregate: Some(aggregate),
        row: Some(row.clone()),
    };
    manifest.write(out)?;
    emit_report(&ResultTable::new(vec![row.clone()]), out, "table")?;
    Ok(RunOutcome { manifest, row })
}
