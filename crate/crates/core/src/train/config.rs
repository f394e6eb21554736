use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::TrainError;
use crate::model::{
    Architecture, ContextualEmbedder, DonationLossKind, EmbedderMode, FeatureFile, HashedEmbedder, StaticVectors,
    TokenEmbedder, Variant,
};
use crate::taxonomy::Scope;

/// Every hyperparameter of a training run. Serialized as a flat TOML table;
/// omitted keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Multiplicative learning-rate decay applied once per epoch.
    pub lr_decay: f64,
    pub d_h1: usize,
    pub d_h2: usize,
    pub d_fc: usize,
    pub alpha: f64,
    pub donation_loss: DonationLossKind,
    pub variant: Variant,
    pub hierarchical: bool,
    pub embedder: EmbedderMode,
    /// Static word-vector file; without one, tokens get hashed vectors of
    /// width `d_embed`.
    pub vectors: Option<PathBuf>,
    /// Precomputed contextual features (required for the contextual mode).
    pub features: Option<PathBuf>,
    pub d_embed: usize,
    pub scope: Scope,
    pub dropout: f64,
    pub folds: usize,
    pub initial_probability: f64,
    /// Train folds on separate threads.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            learning_rate: 1e-4,
            epochs: 50,
            lr_decay: 0.966,
            d_h1: 300,
            d_h2: 300,
            d_fc: 100,
            alpha: 0.75,
            donation_loss: DonationLossKind::Mse,
            variant: Variant::F,
            hierarchical: true,
            embedder: EmbedderMode::Static,
            vectors: None,
            features: None,
            d_embed: 300,
            scope: Scope::All,
            dropout: 0.3,
            folds: 5,
            initial_probability: 0.0,
            parallel: true,
            seed: crate::corpus::DEFAULT_SEED,
        }
    }
}

impl ModelConfig {
    /// Parse a TOML file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<ModelConfig, TrainError> {
        let raw = std::fs::read_to_string(path).map_err(|e| TrainError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = ModelConfig::from_toml(&raw)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.vectors, &mut cfg.features].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn from_toml(raw: &str) -> Result<ModelConfig, TrainError> {
        let cfg: ModelConfig = toml::from_str(raw).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Structural checks; see [`ModelConfig::off_grid`] for the published
    /// search space.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.embedder == EmbedderMode::Contextual && self.features.is_none() {
            return bad("the contextual embedder needs a `features` file".into());
        }
        self.architecture(self.d_embed)
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))
    }

    /// Settings outside the published search space, as `key=value` strings.
    pub fn off_grid(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, key: &str, val: String| {
            if !ok {
                out.push(format!("{key}={val}"));
            }
        };
        check(
            [1e-3, 1e-4].contains(&self.learning_rate),
            "learning_rate",
            self.learning_rate.to_string(),
        );
        check([50, 100].contains(&self.epochs), "epochs", self.epochs.to_string());
        check(self.lr_decay == 0.966, "lr_decay", self.lr_decay.to_string());
        check([300, 768].contains(&self.d_h1), "d_h1", self.d_h1.to_string());
        check(self.d_h2 == 300, "d_h2", self.d_h2.to_string());
        check(self.d_fc == 100, "d_fc", self.d_fc.to_string());
        check(
            [0.0, 0.25, 0.5, 0.75, 0.9, 1.0].contains(&self.alpha),
            "alpha",
            self.alpha.to_string(),
        );
        out
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn architecture(&self, d_embed: usize) -> Architecture {
        Architecture {
            variant: self.variant,
            hierarchical: self.hierarchical,
            scope: self.scope,
            d_embed,
            d_h1: self.d_h1,
            d_h2: self.d_h2,
            d_fc: self.d_fc,
            initial_probability: self.initial_probability,
        }
    }

    /// Learning rate during epoch `e` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi(epoch as i32)
    }

    pub fn build_embedder(&self) -> Result<Box<dyn TokenEmbedder>, TrainError> {
        Ok(match self.embedder {
            EmbedderMode::Static => match &self.vectors {
                Some(p) => Box::new(StaticVectors::load(p)?),
                None => Box::new(HashedEmbedder::new(self.d_embed)),
            },
            EmbedderMode::Contextual => {
                let p = self
                    .features
                    .as_ref()
                    .ok_or_else(|| TrainError::Config("the contextual embedder needs a `features` file".into()))?;
                Box::new(ContextualEmbedder::from_env(FeatureFile::load(p)?))
            }
        })
    }
}
