//! Token embedders: static word vectors, a hashed fallback, and frozen
//! contextual features supplied by an external provider.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderMode {
    #[default]
    Static,
    Contextual,
}

impl std::str::FromStr for EmbedderMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(EmbedderMode::Static),
            "contextual" => Ok(EmbedderMode::Contextual),
            _ => Err(ModelError::Config(format!("unknown embedder mode {s:?}"))),
        }
    }
}

/// Lowercased word tokens; punctuation marks become their own tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Maps an utterance to one vector per token.
///
/// Implementations must be deterministic and never return an empty list:
/// text without tokens yields a single zero vector.
pub trait TokenEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn mode(&self) -> EmbedderMode;
    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, ModelError>;
}

/// Word vectors read from the common text format (`word v1 .. vd` per
/// line, optional `count dim` header). Unknown words map to zero.
#[derive(Debug, Clone, Default)]
pub struct StaticVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl StaticVectors {
    pub fn new(dim: usize) -> StaticVectors {
        StaticVectors {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, word: &str, v: Vec<f64>) -> Result<(), ModelError> {
        if v.len() != self.dim {
            return Err(ModelError::Embedding(format!(
                "vector for {word:?} has {} dims, expected {}",
                v.len(),
                self.dim
            )));
        }
        self.vectors.insert(word.to_lowercase(), v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(Vec::as_slice)
    }

    pub fn load(path: &Path) -> Result<StaticVectors, ModelError> {
        let file = fs::File::open(path).map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut sv: Option<StaticVectors> = None;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ModelError::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let nums: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let nums = nums.map_err(|e| ModelError::Embedding(format!("{}:{}: {e}", path.display(), n + 1)))?;
            if n == 0 && nums.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            let sv = sv.get_or_insert_with(|| StaticVectors::new(nums.len()));
            sv.insert(word, nums)
                .map_err(|e| ModelError::Embedding(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        sv.ok_or_else(|| ModelError::Embedding(format!("{}: no vectors", path.display())))
    }
}

impl TokenEmbedder for StaticVectors {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> EmbedderMode {
        EmbedderMode::Static
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Ok(vec![vec![0.0; self.dim]]);
        }
        Ok(toks
            .iter()
            .map(|t| self.get(t).map_or_else(|| vec![0.0; self.dim], <[f64]>::to_vec))
            .collect())
    }
}

/// Pseudo-random but fixed vector per token, seeded by a digest of the
/// token. Useful when no pretrained vectors are available.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HashedEmbedder {
    pub dim: usize,
    pub scale: f64,
}

impl HashedEmbedder {
    pub fn new(dim: usize) -> HashedEmbedder {
        HashedEmbedder { dim, scale: 0.5 }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let digest = Sha256::digest(token.as_bytes());
        let seed: [u8; 32] = digest.into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim)
            .map(|_| rng.random_range(-self.scale..=self.scale))
            .collect()
    }
}

impl TokenEmbedder for HashedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn mode(&self) -> EmbedderMode {
        EmbedderMode::Static
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Ok(vec![vec![0.0; self.dim]]);
        }
        Ok(toks.iter().map(|t| self.vector(t)).collect())
    }
}

/// One subword piece from a contextual encoder, tagged with the index of
/// the word it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub word: usize,
    pub vector: Vec<f64>,
}

/// Source of frozen contextual subword features.
pub trait ContextualProvider: Send + Sync {
    /// Identifies the encoder; part of the cache key.
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn pieces(&self, text: &str) -> Result<Vec<Piece>, ModelError>;
}

/// Mean-pool subword pieces to word positions, in word order.
pub fn pool_pieces(pieces: &[Piece], dim: usize) -> Vec<Vec<f64>> {
    let mut words: std::collections::BTreeMap<usize, (Vec<f64>, usize)> = Default::default();
    for p in pieces {
        let (acc, n) = words.entry(p.word).or_insert_with(|| (vec![0.0; dim], 0));
        for (a, x) in acc.iter_mut().zip(&p.vector) {
            *a += x;
        }
        *n += 1;
    }
    let out: Vec<Vec<f64>> = words
        .into_values()
        .map(|(acc, n)| acc.into_iter().map(|a| a / n as f64).collect())
        .collect();
    if out.is_empty() {
        vec![vec![0.0; dim]]
    } else {
        out
    }
}

/// Features precomputed offline, one JSON object per line:
/// `{"text": ..., "pieces": [{"word": 0, "vector": [...]}, ...]}`.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    name: String,
    dim: usize,
    by_text: HashMap<String, Vec<Piece>>,
}

#[derive(Deserialize)]
struct FeatureRecord {
    text: String,
    pieces: Vec<Piece>,
}

impl FeatureFile {
    pub fn load(path: &Path) -> Result<FeatureFile, ModelError> {
        let raw = fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut by_text = HashMap::new();
        let mut dim = None;
        for (n, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: FeatureRecord = serde_json::from_str(line)
                .map_err(|e| ModelError::Embedding(format!("{}:{}: {e}", path.display(), n + 1)))?;
            for p in &rec.pieces {
                let d = *dim.get_or_insert(p.vector.len());
                if p.vector.len() != d {
                    return Err(ModelError::Embedding(format!(
                        "{}:{}: piece of width {} in a file of width {d}",
                        path.display(),
                        n + 1,
                        p.vector.len()
                    )));
                }
            }
            by_text.insert(rec.text, rec.pieces);
        }
        let name = format!("file:{}", hex::encode(Sha256::digest(raw.as_bytes())));
        Ok(FeatureFile {
            name,
            dim: dim.ok_or_else(|| ModelError::Embedding(format!("{}: no features", path.display())))?,
            by_text,
        })
    }
}

impl ContextualProvider for FeatureFile {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn pieces(&self, text: &str) -> Result<Vec<Piece>, ModelError> {
        self.by_text
            .get(text)
            .cloned()
            .ok_or_else(|| ModelError::Embedding(format!("no features for utterance {text:?}")))
    }
}

/// Contextual embedder with word-level pooling and an optional on-disk
/// cache of pooled matrices keyed by a digest of provider name and text.
pub struct ContextualEmbedder<P> {
    provider: P,
    cache_dir: Option<PathBuf>,
}

impl<P: ContextualProvider> ContextualEmbedder<P> {
    pub fn new(provider: P, cache_dir: Option<PathBuf>) -> ContextualEmbedder<P> {
        ContextualEmbedder { provider, cache_dir }
    }

    /// Cache directory from `FACEDYN_CACHE`, if set.
    pub fn from_env(provider: P) -> ContextualEmbedder<P> {
        let dir = std::env::var_os("FACEDYN_CACHE").map(PathBuf::from);
        ContextualEmbedder::new(provider, dir)
    }

    pub fn cache_key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.provider.name().as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }

    fn cache_path(&self, text: &str) -> Option<PathBuf> {
        self.cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.json", self.cache_key(text))))
    }
}

impl<P: ContextualProvider> TokenEmbedder for ContextualEmbedder<P> {
    fn dim(&self) -> usize {
        self.provider.dim()
    }

    fn mode(&self) -> EmbedderMode {
        EmbedderMode::Contextual
    }

    fn embed(&self, text: &str) -> Result<Vec<Vec<f64>>, ModelError> {
        let path = self.cache_path(text);
        if let Some(p) = &path {
            if let Ok(raw) = fs::read(p) {
                if let Ok(m) = serde_json::from_slice::<Vec<Vec<f64>>>(&raw) {
                    return Ok(m);
                }
                log::warn!("ignoring unreadable cache entry {}", p.display());
            }
        }
        let pooled = pool_pieces(&self.provider.pieces(text)?, self.provider.dim());
        if let Some(p) = path {
            let io = |e| ModelError::Io {
                path: p.clone(),
                source: e,
            };
            fs::create_dir_all(p.parent().expect("cache file has a parent")).map_err(io)?;
            let tmp = p.with_extension("tmp");
            fs::write(&tmp, serde_json::to_vec(&pooled).expect("serializable")).map_err(io)?;
            fs::rename(&tmp, &p).map_err(io)?;
        }
        Ok(pooled)
    }
}
