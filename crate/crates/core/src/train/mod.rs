//! Optimization, cross-validation, metrics and checkpoints.

mod config;
mod cv;
pub mod metrics;
mod optim;

use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::model::ModelError;
use crate::nn::NnError;

pub use config::ModelConfig;
pub use cv::{
    compare_predictions, embed_corpus, evaluate, face_metrics, load_model, run_cv, save_model, train_fold, train_on,
    ConfusionReport, ConversationPrediction, CvReport, DonationReport, EmbeddedConversation, EmbeddedCorpus, EpochLoss,
    FaceMetrics, FoldReport, PredictionRecord, ReferenceTargets, TraceRecord, TrainedModel,
};
pub use metrics::{
    accuracy, chi2_1_sf, confusion, macro_f1, macro_f1_present, mcnemar, threshold_select, McNemar, Threshold,
};
pub use optim::Adam;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("metric: {0}")]
    Metric(String),
    #[error("training diverged at epoch {epoch} on conversation {conversation}: loss {loss}")]
    Diverged {
        epoch: usize,
        conversation: String,
        loss: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("unknown conversation {0}")]
    UnknownConversation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nn(#[from] NnError),
}
