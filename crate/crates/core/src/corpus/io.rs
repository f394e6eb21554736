use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{select_gold_label, Conversation, Corpus, CorpusError, Outcome, Utterance, DEFAULT_SEED};
use crate::taxonomy::{role_allows, FaceAct, Role};

/// One line of the corpus wire format. Field order is the canonical
/// serialization order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub conv_id: String,
    #[serde(default)]
    pub turn: Option<u32>,
    pub index: usize,
    pub role: String,
    pub text: String,
    #[serde(default)]
    pub labels: Vec<String>,
    pub outcome: u8,
}

/// Corpus parser with its reduction seed.
#[derive(Debug, Clone)]
pub struct CorpusReader {
    pub seed: u64,
    /// Accept utterances without labels (raw conversations awaiting
    /// annotation). Their `gold_labels` are empty and `selected_gold` is
    /// `Other`.
    pub allow_unlabeled: bool,
}

impl Default for CorpusReader {
    fn default() -> Self {
        CorpusReader {
            seed: DEFAULT_SEED,
            allow_unlabeled: false,
        }
    }
}

/// Parse and validate a corpus file with the default reduction seed.
pub fn parse_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    CorpusReader::default().read(path)
}

impl CorpusReader {
    pub fn read(&self, path: &Path) -> Result<Corpus, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.parse_str(&text)
    }

    pub fn parse_str(&self, text: &str) -> Result<Corpus, CorpusError> {
        struct Pending {
            outcome: Outcome,
            first_line: usize,
            utterances: BTreeMap<usize, (usize, Utterance)>,
        }
        let mut order: Vec<String> = Vec::new();
        let mut pending: BTreeMap<String, Pending> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let rec: UtteranceRecord = serde_json::from_str(raw).map_err(|e| CorpusError::Parse {
                line,
                message: e.to_string(),
            })?;
            let invalid = |message: String| CorpusError::Validation { line, message };

            let role: Role = rec.role.parse().map_err(|e| invalid(format!("{e}")))?;
            let outcome = Outcome::try_from(rec.outcome).map_err(invalid)?;
            if rec.conv_id.is_empty() {
                return Err(invalid("empty conv_id".into()));
            }
            let mut gold_labels = BTreeSet::new();
            for l in &rec.labels {
                let act: FaceAct = l.parse().map_err(|e| invalid(format!("{e}")))?;
                if !role_allows(role, act) {
                    return Err(CorpusError::RoleInvalidLabel {
                        conv_id: rec.conv_id.clone(),
                        index: rec.index,
                        role,
                        label: act,
                    });
                }
                gold_labels.insert(act);
            }
            if gold_labels.is_empty() && !self.allow_unlabeled {
                return Err(CorpusError::EmptyLabels {
                    conv_id: rec.conv_id,
                    index: rec.index,
                });
            }
            let selected_gold =
                select_gold_label(&rec.conv_id, rec.index, &gold_labels, self.seed).unwrap_or(FaceAct::Other);

            let entry = pending.entry(rec.conv_id.clone()).or_insert_with(|| {
                order.push(rec.conv_id.clone());
                Pending {
                    outcome,
                    first_line: line,
                    utterances: BTreeMap::new(),
                }
            });
            if entry.outcome != outcome {
                return Err(invalid(format!(
                    "conversation {:?} has outcome {} here but {} on line {}",
                    rec.conv_id, rec.outcome, entry.outcome as u8, entry.first_line
                )));
            }
            let utt = Utterance {
                index: rec.index,
                turn: rec.turn,
                role,
                text: rec.text,
                gold_labels,
                selected_gold,
            };
            if let Some((prev, _)) = entry.utterances.insert(rec.index, (line, utt)) {
                return Err(invalid(format!(
                    "conversation {:?} repeats utterance index {} (first on line {prev})",
                    rec.conv_id, rec.index
                )));
            }
        }

        let mut conversations = Vec::with_capacity(order.len());
        for id in order {
            let p = pending.remove(&id).expect("recorded");
            let utterances: Vec<Utterance> = p.utterances.into_values().map(|(_, u)| u).collect();
            if let Some((pos, u)) = utterances.iter().enumerate().find(|(pos, u)| u.index != *pos) {
                return Err(CorpusError::Conversation {
                    conv_id: id,
                    message: format!("utterance indices must be 0..n-1; expected {pos}, found {}", u.index),
                });
            }
            conversations.push(Conversation {
                id,
                utterances,
                outcome: p.outcome,
            });
        }
        if conversations.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut corpus = Corpus {
            conversations,
            digest: String::new(),
        };
        corpus.digest = hex::encode(Sha256::digest(serialize_corpus(&corpus).as_bytes()));
        Ok(corpus)
    }
}

/// Canonical JSONL serialization: conversations in corpus order, utterances
/// by index, labels in canonical act order.
pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for c in &corpus.conversations {
        for u in &c.utterances {
            let rec = UtteranceRecord {
                conv_id: c.id.clone(),
                turn: u.turn,
                index: u.index,
                role: u.role.name().to_string(),
                text: u.text.clone(),
                labels: u.gold_labels.iter().map(|l| l.name().to_string()).collect(),
                outcome: c.outcome.into(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable record"));
            out.push('\n');
        }
    }
    out
}
