use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::baselines::Baseline;
use super::config::{Family, ModelConfig};
use super::graph::ParamSet;
use super::neural::NeuralModel;
use super::tensor::Tensor;
use super::TrainedModel;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Weights {
    Neural(Vec<NamedArray>),
    Baseline(Baseline),
}

/// Serialized model state; floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub family: Family,
    pub config: ModelConfig,
    pub epoch: usize,
    pub selection_score: f64,
    pub weights: Weights,
}

impl Checkpoint {
    pub fn from_neural(model: &NeuralModel, epoch: usize, selection_score: f64) -> Self {
        let params = model
            .params
            .names()
            .iter()
            .zip(model.params.tensors())
            .map(|(name, t)| NamedArray {
                name: name.clone(),
                rows: t.rows,
                cols: t.cols,
                data: t.data.clone(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            family: model.config.family,
            config: model.config.clone(),
            epoch,
            selection_score,
            weights: Weights::Neural(params),
        }
    }

    pub fn from_baseline(config: &ModelConfig, model: &Baseline, selection_score: f64) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            family: config.family,
            config: config.clone(),
            epoch: 0,
            selection_score,
            weights: Weights::Baseline(model.clone()),
        }
    }

    pub fn from_trained(model: &TrainedModel, epoch: usize, selection_score: f64) -> Self {
        match model {
            TrainedModel::Neural(m) => Checkpoint::from_neural(m, epoch, selection_score),
            TrainedModel::Baseline { config, model } => {
                Checkpoint::from_baseline(config, model, selection_score)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        if ck.family != ck.config.family {
            return Err(Error::Validation(format!(
                "checkpoint family `{}` disagrees with its config `{}`",
                ck.family, ck.config.family
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&text)
    }

    /// Rebuilds the scoring model.
    pub fn model(&self) -> Result<TrainedModel> {
        match &self.weights {
            Weights::Neural(arrays) => {
                let mut ps = ParamSet::new();
                for a in arrays {
                    if a.data.len() != a.rows * a.cols {
                        return Err(Error::Validation(format!(
                            "parameter `{}` has {} values for shape {}x{}",
                            a.name,
                            a.data.len(),
                            a.rows,
                            a.cols
                        )));
                    }
                    ps.add(a.name.clone(), Tensor::from_vec(a.rows, a.cols, a.data.clone()));
                }
                Ok(TrainedModel::Neural(NeuralModel::from_parts(
                    self.config.clone(),
                    ps,
                )?))
            }
            Weights::Baseline(b) => {
                if b.family() != self.family {
                    return Err(Error::Validation(
                        "baseline weights do not match the checkpoint family".into(),
                    ));
                }
                Ok(TrainedModel::Baseline {
                    config: self.config.clone(),
                    model: b.clone(),
                })
            }
        }
    }
}
