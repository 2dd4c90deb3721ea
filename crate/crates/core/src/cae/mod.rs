//! Convolutional auto-encoder training and classification.
//!
//! An encoder layer is trained to reconstruct its input through the
//! transpose of its own weights, either with the full gradient or with the
//! gradient restricted to the newest hidden frame (the path a streaming
//! engine actually recomputes). The hidden activations then feed an MLP
//! classifier evaluated by hold-out or k-fold protocols.

pub mod data;
pub mod mlp;
pub mod model;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use data::{
    make_folds, resample, synth_dataset, train_classifier, ClassificationReport, Fold, LabeledDataset, SplitKind,
    SplitSpec, SynthParams,
};
pub use mlp::{MlpClassifier, MlpConfig};
pub use model::{
    dataset_error, encode_features, gradients, reconstruction_error, train, CaeGradients, CaeModel, TrainConfig,
    TrainMode, TrainReport,
};

use crate::conv::Activation;
use crate::error::{invalid, Result};

/// Auto-encoder geometry for the end-to-end pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaeShape {
    pub hidden: usize,
    pub window: usize,
    pub activation: Activation,
}

impl Default for CaeShape {
    fn default() -> Self {
        CaeShape {
            hidden: 8,
            window: 6,
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub mode: TrainMode,
    pub model: CaeModel,
    pub training: TrainReport,
    pub classification: ClassificationReport,
}

/// Initialise from `train.seed`, train the auto-encoder, encode every
/// sample and evaluate the classifier under `split`.
pub fn run_pipeline(
    dataset: &LabeledDataset,
    shape: &CaeShape,
    train_cfg: &TrainConfig,
    split: &SplitSpec,
    mlp: &MlpConfig,
) -> Result<PipelineResult> {
    if dataset.observed_classes() < 2 {
        return invalid("dataset needs at least two distinct classes");
    }
    if dataset.time_len() < shape.window {
        return invalid(format!(
            "sequences of {} frames are shorter than the window {}",
            dataset.time_len(),
            shape.window
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let init = CaeModel::random(dataset.context(), shape.hidden, shape.window, shape.activation, &mut rng)?;
    let (model, training) = train(&init, dataset.samples(), train_cfg)?;
    let features = encode_features(&model, dataset.samples())?;
    let classification = train_classifier(&features, dataset.labels(), dataset.classes(), split, mlp)?;
    Ok(PipelineResult {
        mode: train_cfg.mode,
        model,
        training,
        classification,
    })
}
