//! Article heads, sequence encoders and classical baselines behind one
//! scoring interface, with exact reverse-mode gradients for training.

mod baselines;
mod batch;
mod checkpoint;
mod config;
mod graph;
mod neural;
mod optim;
mod tensor;


pub use baselines::{classical_baseline_fit_predict, Baseline, BaselineParams, Tree, TreeNode};
pub use batch::Batch;
pub use checkpoint::{Checkpoint, NamedArray, Weights, CHECKPOINT_VERSION};
pub use config::{Family, InputView, ModelConfig, Widths};
pub use graph::{Graph, NodeId, ParamId, ParamSet};
pub use neural::{NeuralModel, INIT_SCHEME};
pub use optim::AdamW;
pub use tensor::Tensor;

pub(crate) use graph::{sigmoid, softplus};

use crate::error::Result;

/// A model ready to score batches.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Neural(NeuralModel),
    Baseline { config: ModelConfig, model: Baseline },
}

impl TrainedModel {
    pub fn config(&self) -> &ModelConfig {
        match self {
            TrainedModel::Neural(m) => &m.config,
            TrainedModel::Baseline { config, .. } => config,
        }
    }

    /// Positive-class scores in `[0, 1]`.
    pub fn scores(&self, batch: &Batch) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Neural(m) => Ok(m.logits(batch)?.into_iter().map(sigmoid).collect()),
            TrainedModel::Baseline { config, model } => {
                Ok(model.scores(&batch.flat_features(config.view)))
            }
        }
    }
}
