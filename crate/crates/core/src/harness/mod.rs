//! Config-driven experiments: cross-validated runs, the view ablation, the
//! series-length sweep, the embedding swap and table output.

mod config;
mod dataset;
mod report;
mod run;
mod studies;


pub use config::{
    DataConfig, EvaluationConfig, ExperimentConfig, LabelConfig, ModelSection, TrainingConfig,
    WidthsSpec,
};
pub use dataset::{prepare_fold, Dataset, PreparedFold};
pub use report::{emit_report, ResultTable, TableRow, METRIC_HEADINGS};
pub use run::{
    dataset_label, model_label, model_seed, run_experiment, run_on_dataset, FoldRecord,
    RunManifest, RunOutcome, RunStatus, MANIFEST_FILE,
};
pub use studies::{
    pearson_r, run_ablation, run_embedding_swap, run_length_sweep, Correlation, StudyResult,
    SwapResult, SweepResult, ABLATION_VIEWS, SWEEP_LENGTHS,
};
