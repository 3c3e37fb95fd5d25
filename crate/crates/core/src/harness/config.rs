use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusShape, SyntheticSpec};
use crate::error::{Error, Result};
use crate::evaluation::{Hyperparameters, PosWeight, Protocol, SelectionPolicy};
use crate::labeling::{LabelRule, RuleKind, Task};
use crate::models::{BaselineParams, Family, InputView, Widths};

/// Where the corpus and its embeddings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic {
        synthetic: SyntheticSpec,
    },
    Files {
        corpus_path: PathBuf,
        corpus_shape: CorpusShape,
        embeddings_path: PathBuf,
        allow_empty_description: bool,
    },
}

impl DataConfig {
    pub fn shape(&self) -> CorpusShape {
        match self {
            DataConfig::Synthetic { synthetic } => synthetic.corpus_shape,
            DataConfig::Files { corpus_shape, .. } => *corpus_shape,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataConfig::Synthetic { .. } => "synthetic".into(),
            DataConfig::Files { corpus_path, .. } => corpus_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "corpus".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelConfig {
    pub task: Task,
    pub rule: RuleKind,
    /// Percentile for `percentile_threshold`; must be 0 for other rules.
    pub parameter: f64,
}

impl LabelConfig {
    pub fn rule(&self) -> LabelRule {
        LabelRule {
            task: self.task,
            rule: self.rule,
            parameter: self.parameter,
            threshold_value: None,
        }
    }
}

/// A named width preset (`standard` or `tiny`) or explicit widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WidthsSpec {
    Preset(String),
    Custom(Widths),
}

impl WidthsSpec {
    pub fn resolve(&self) -> Result<Widths> {
        match self {
            WidthsSpec::Preset(p) if p == "standard" => Ok(Widths::standard()),
            WidthsSpec::Preset(p) if p == "tiny" => Ok(Widths::tiny()),
            WidthsSpec::Preset(p) => Err(Error::Config(format!(
                "unknown width preset `{p}` (expected standard or tiny)"
            ))),
            WidthsSpec::Custom(w) => Ok(w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: Family,
    pub view: InputView,
    /// Tweets per series fed to sequence models and series baselines.
    pub max_len: usize,
    pub widths: WidthsSpec,
}

/// Training hyperparameters by profile. The named profiles fix learning
/// rate, weight decay, dropout and epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainingConfig {
    Evons {
        batch_size: usize,
        pos_weight: PosWeight,
        threshold: f64,
    },
    Fakenewsnet {
        batch_size: usize,
        pos_weight: PosWeight,
        threshold: f64,
    },
    Custom {
        lr: f64,
        weight_decay: f64,
        dropout: f64,
        epochs: usize,
        batch_size: usize,
        pos_weight: PosWeight,
        threshold: f64,
    },
}

impl TrainingConfig {
    pub fn resolve(&self) -> Hyperparameters {
        match *self {
            TrainingConfig::Evons {
                batch_size,
                pos_weight,
                threshold,
            } => Hyperparameters {
                batch_size,
                pos_weight,
                threshold,
                ..Hyperparameters::evons()
            },
            TrainingConfig::Fakenewsnet {
                batch_size,
                pos_weight,
                threshold,
            } => Hyperparameters {
                batch_size,
                pos_weight,
                threshold,
                ..Hyperparameters::fakenewsnet()
            },
            TrainingConfig::Custom {
                lr,
                weight_decay,
                dropout,
                epochs,
                batch_size,
                pos_weight,
                threshold,
            } => Hyperparameters {
                lr,
                weight_decay,
                dropout,
                epochs,
                batch_size,
                pos_weight,
                threshold,
            },
        }
    }

    pub fn profile_name(&self) -> &'static str {
        match self {
            TrainingConfig::Evons { .. } => "evons",
            TrainingConfig::Fakenewsnet { .. } => "fakenewsnet",
            TrainingConfig::Custom { .. } => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub folds: usize,
    pub protocol: Protocol,
    pub write_checkpoints: bool,
    pub baseline: BaselineParams,
}

/// One experiment. Every field is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub workers: usize,
    pub data: DataConfig,
    pub labels: LabelConfig,
    pub model: ModelSection,
    pub training: TrainingConfig,
    pub selection: SelectionPolicy,
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks cross-field consistency. Runs before any data is touched.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.evaluation.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.evaluation.folds));
        }
        if let DataConfig::Synthetic { synthetic } = &self.data {
            synthetic.validate()?;
            if synthetic.task != self.labels.task {
                return bad(format!(
                    "synthetic corpus is generated for task {} but labels use {}",
                    synthetic.task, self.labels.task
                ));
            }
        }
        let rule = self.labels.rule();
        rule.check()?;
        if self.labels.rule != RuleKind::PercentileThreshold && self.labels.parameter != 0.0 {
            return bad(format!(
                "label parameter must be 0 for rule {}",
                self.labels.rule
            ));
        }
        let shape = self.data.shape();
        match (self.labels.rule, shape) {
            (RuleKind::PercentileThreshold, CorpusShape::Series) => {
                return bad("percentile_threshold labels need an article corpus".into())
            }
            (RuleKind::MedianSplit, CorpusShape::Article) => {
                return bad("median_split labels need a series corpus".into())
            }
            _ => {}
        }
        let family = self.model.family;
        match shape {
            CorpusShape::Article => {
                if family.is_sequence() {
                    return bad(format!("`{family}` needs a series corpus"));
                }
                if self.model.view != InputView::All {
                    return bad(format!(
                        "view {} applies to series corpora; article variants are chosen by family",
                        self.model.view
                    ));
                }
            }
            CorpusShape::Series => {
                if family.is_article_head() {
                    return bad(format!("`{family}` needs an article corpus"));
                }
                if self.model.max_len == 0 {
                    return bad("max_len must be at least 1 for series corpora".into());
                }
            }
        }
        let widths = self.model.widths.resolve()?;
        if family == Family::Transformer && widths.model % widths.heads != 0 {
            return bad(format!(
                "model width {} is not divisible by {} heads",
                widths.model, widths.heads
            ));
        }
        self.training.resolve().validate()?;
        self.selection.validate()?;
        Ok(())
    }
}
