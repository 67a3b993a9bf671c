//! Losses, the optimizer, PCA, the classical head, model assemblies, and the
//! training pipelines (classical pre-training, frozen-feature fine-tuning,
//! end-to-end training, and the PCA baseline).

mod adam;
mod assembly;
mod head;
mod loss;
mod pca;
mod train;

pub use adam::{Adam, AdamHyper};
pub use assembly::{
    evaluate, evaluate_with, EvalMetrics, ModelAssembly, ModelVariant, Readout,
    DEFAULT_READOUT_GAIN,
};
pub use head::DenseHead;
pub use loss::{softmax, softmax_ce};
pub use pca::{pca_fit, pca_project, Pca};
pub use train::{
    finetune_stage2, pretrain_stage1, train_e2e, train_pca_vqc, ttn_vqc_sample_grads,
    ttn_vqc_sample_loss, EpochRow, SampleGrads, SplitKind, Stage1Result, VqcTrainResult,
};

use crate::qsim::QsimError;
use crate::tt::TtError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("frozen parameters mutated during fine-tuning")]
    FrozenParamMutation,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tt(#[from] TtError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// The loss driving every pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    CrossEntropy,
}

/// Minibatch training hyperparameters shared by all pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            learning_rate: 1e-3,
            epochs: 10,
            seed: 0,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.batch_size == 0 {
            return Err(LearnError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(LearnError::InvalidConfig(format!(
                "learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
