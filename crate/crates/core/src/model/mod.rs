//! The hierarchical face-act model: utterance encoder, causal conversation
//! encoder, face-act classifier and the donation-probability head.

mod dialogue;
pub mod embed;
mod encoder;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::NnError;

pub use dialogue::{
    donation_loss, face_loss, total_loss, DonationLossKind, DonationTrace, FaceActPrediction, Forward, HiGru,
    LossParts, Targets, PROB_FLOOR,
};
pub use embed::{
    tokenize, ContextualEmbedder, ContextualProvider, EmbedderMode, FeatureFile, HashedEmbedder, Piece, StaticVectors,
    TokenEmbedder,
};
pub use encoder::{self_attention, Dropout, UtteranceEncoder};

use crate::taxonomy::Scope;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{0}")]
    Config(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("alpha must lie in [0, 1], got {0}")]
    Alpha(f64),
    #[error("embedding: {0}")]
    Embedding(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Which components enter the fusion concatenation at both levels.
///
/// | variant | token fusion | utterance fusion |
/// |---|---|---|
/// | `base` | `[h→; h←]` | `[H]` |
/// | `f` | `[h→; e(w); h←]` | `[H; e(u)]` |
/// | `sf` | `[ah→; h→; e(w); h←; ah←]` | `[AH; H; e(u)]` |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    #[default]
    F,
    Sf,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::F, Variant::Sf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::F => "f",
            Variant::Sf => "sf",
        }
    }

    pub fn uses_embedding(self) -> bool {
        self != Variant::Base
    }

    pub fn uses_attention(self) -> bool {
        self == Variant::Sf
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "f" => Ok(Variant::F),
            "sf" => Ok(Variant::Sf),
            _ => Err(ModelError::Config(format!(
                "unknown variant {s:?} (expected base, f or sf)"
            ))),
        }
    }
}

/// Shape of a model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub variant: Variant,
    /// Without the conversation level, utterance embeddings feed the heads
    /// directly (the non-hierarchical baselines).
    pub hierarchical: bool,
    pub scope: Scope,
    pub d_embed: usize,
    pub d_h1: usize,
    pub d_h2: usize,
    pub d_fc: usize,
    /// Donation probability before the first utterance.
    pub initial_probability: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            variant: Variant::F,
            hierarchical: true,
            scope: Scope::All,
            d_embed: 300,
            d_h1: 300,
            d_h2: 300,
            d_fc: 100,
            initial_probability: 0.0,
        }
    }
}

impl Architecture {
    /// A small instance for tests and demos.
    pub fn tiny(variant: Variant, d: usize) -> Architecture {
        Architecture {
            variant,
            d_embed: d,
            d_h1: d,
            d_h2: d,
            d_fc: d,
            ..Architecture::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("d_embed", self.d_embed),
            ("d_h1", self.d_h1),
            ("d_h2", self.d_h2),
            ("d_fc", self.d_fc),
        ] {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.initial_probability) {
            return Err(ModelError::Config(format!(
                "initial_probability {} outside [0, 1]",
                self.initial_probability
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        crate::taxonomy::label_space(self.scope).len()
    }
}
