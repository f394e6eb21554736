//! Provenance record attached to every artifact the CLI writes.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Cli, CliError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: Option<String>,
    pub corpus_digest: Option<String>,
    /// Digest of other input files (reports, checkpoints).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input_digest: Option<String>,
    pub seed: u64,
    pub version: String,
    /// Unix seconds. `SOURCE_DATE_EPOCH` pins both for reproducible output.
    pub started: u64,
    pub finished: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, config_digest: Option<&str>, corpus_digest: Option<&str>, cli: &Cli) -> RunManifest {
        let t = now();
        RunManifest {
            command: command.to_string(),
            config_digest: config_digest.map(str::to_string),
            corpus_digest: corpus_digest.map(str::to_string),
            input_digest: None,
            seed: cli.seed.unwrap_or(facedyn::corpus::DEFAULT_SEED),
            version: env!("CARGO_PKG_VERSION").to_string(),
            started: t,
            finished: t,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> RunManifest {
        self.seed = seed;
        self
    }

    pub fn with_input(mut self, digest: String) -> RunManifest {
        self.input_digest = Some(digest);
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    /// `<artifact>.manifest.json`, for artifacts whose format has no room
    /// for one (canonical corpora, binary checkpoints).
    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".manifest.json");
        artifact.with_file_name(name)
    }

    pub fn write_sidecar(mut self, artifact: &Path) -> Result<(), CliError> {
        self.finished = now().max(self.started);
        let path = Self::sidecar_path(artifact);
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
    }
}
