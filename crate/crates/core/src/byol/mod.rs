//! Bootstrap training: an online encoder/projector/predictor learns to predict a slowly moving
//! target copy of itself across two augmented views of the same utterance.

mod checkpoint;
mod loss;
mod model;
mod train;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::audio_io::AudioError;
use crate::augment::AugmentError;
use crate::nn::NnError;

pub use checkpoint::{decode_chunks, encode_chunks, Checkpoint, CheckpointError, Chunk, ChunkData, MAGIC, VERSION};
pub use loss::{byol_loss, byol_loss_grad, ema_update, MIN_NORM};
pub use model::{byol_objective, embedding_std, Architecture, Objective, Online, OnlineAdam, Target};
pub use train::{
    fit, fit_waveforms, min_train_len, train_step, views_to_tensors, FitOutcome, FitSetup, TrainConfig,
    TrainStepReport, TrainerState, COLLAPSE_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum ByolError {
    #[error("loss undefined for a zero-magnitude vector")]
    ZeroVector,
    #[error("prediction has {prediction} dims, target projection {target}")]
    DimMismatch { prediction: usize, target: usize },
    #[error("non-finite loss at step {step} (forward {loss_forward}, reverse {loss_reverse}); training halted")]
    NonFiniteLoss {
        step: u64,
        loss_forward: f64,
        loss_reverse: f64,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("no usable training audio")]
    EmptyCorpus,
    #[error("bad batch: {0}")]
    BatchShape(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl ByolError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ByolError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
