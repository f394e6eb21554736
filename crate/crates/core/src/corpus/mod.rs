//! The annotated persuasion corpus: JSONL ingestion, validation, gold-label
//! reduction and outcome-stratified cross-validation folds.

mod folds;
mod gold;
mod io;
mod synth;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{FaceAct, Role};

pub use folds::{stratified_folds, FoldSplit};
pub use gold::select_gold_label;
pub use io::{parse_corpus, serialize_corpus, CorpusReader, UtteranceRecord};
pub use synth::{synthetic_corpus, templates, SyntheticSpec};

/// Seed used for gold-label reduction when none is given.
pub const DEFAULT_SEED: u64 = 13;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: malformed record: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("conversation {conv_id:?} utterance {index}: label {label} is not valid for role {role}")]
    RoleInvalidLabel {
        conv_id: String,
        index: usize,
        role: Role,
        label: FaceAct,
    },
    #[error("conversation {conv_id:?}: {message}")]
    Conversation { conv_id: String, message: String },
    #[error("conversation {conv_id:?} utterance {index} has no gold labels")]
    EmptyLabels { conv_id: String, index: usize },
    #[error("corpus is empty")]
    Empty,
    #[error("the two annotations share no labeled utterances")]
    NoOverlap,
    #[error("cannot build {k} folds: {class} has only {count} conversations")]
    TooFewForFolds { k: usize, class: Outcome, count: usize },
}

/// Whether the persuadee agreed to donate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Outcome {
    NonDonor,
    Donor,
}

impl Outcome {
    pub fn as_f64(self) -> f64 {
        match self {
            Outcome::NonDonor => 0.0,
            Outcome::Donor => 1.0,
        }
    }
}

impl From<Outcome> for u8 {
    fn from(o: Outcome) -> u8 {
        o as u8
    }
}

impl TryFrom<u8> for Outcome {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Outcome::NonDonor),
            1 => Ok(Outcome::Donor),
            v => Err(format!("outcome must be 0 or 1, got {v}")),
        }
    }
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Donor => "donor",
            Outcome::NonDonor => "non-donor",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// 0-based position in the conversation.
    pub index: usize,
    /// Turn id, kept as metadata only.
    pub turn: Option<u32>,
    pub role: Role,
    pub text: String,
    pub gold_labels: BTreeSet<FaceAct>,
    pub selected_gold: FaceAct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
    pub outcome: Outcome,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub conversations: Vec<Conversation>,
    /// Hex SHA-256 of the source bytes.
    pub digest: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.conversations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conversations.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.id == id)
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.conversations.iter().filter(|c| c.outcome == outcome).count()
    }

    pub fn utterances(&self) -> impl Iterator<Item = (&Conversation, &Utterance)> {
        self.conversations
            .iter()
            .flat_map(|c| c.utterances.iter().map(move |u| (c, u)))
    }

    /// Share of utterances carrying more than one gold label.
    pub fn multi_label_fraction(&self) -> f64 {
        let (multi, total) = self.utterances().fold((0usize, 0usize), |(m, t), (_, u)| {
            (m + usize::from(u.gold_labels.len() > 1), t + 1)
        });
        if total == 0 {
            0.0
        } else {
            multi as f64 / total as f64
        }
    }

    /// Re-run gold-label reduction under another seed.
    pub fn reselect_gold(&mut self, seed: u64) {
        for c in &mut self.conversations {
            for u in &mut c.utterances {
                if let Some(l) = select_gold_label(&c.id, u.index, &u.gold_labels, seed) {
                    u.selected_gold = l;
                }
            }
        }
    }

    /// Selected gold labels of the utterances both corpora label, matched by
    /// conversation id and index, in this corpus's order.
    pub fn paired_labels(&self, other: &Corpus) -> Result<(Vec<FaceAct>, Vec<FaceAct>), CorpusError> {
        let theirs: std::collections::BTreeMap<(&str, usize), &Utterance> = other
            .utterances()
            .filter(|(_, u)| !u.gold_labels.is_empty())
            .map(|(c, u)| ((c.id.as_str(), u.index), u))
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (c, u) in self.utterances().filter(|(_, u)| !u.gold_labels.is_empty()) {
            if let Some(v) = theirs.get(&(c.id.as_str(), u.index)) {
                a.push(u.selected_gold);
                b.push(v.selected_gold);
            }
        }
        if a.is_empty() {
            return Err(CorpusError::NoOverlap);
        }
        Ok((a, b))
    }

    /// Subset of conversations by id, in corpus order.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
        Corpus {
            conversations: self
                .conversations
                .iter()
                .filter(|c| wanted.contains(c.id.as_str()))
                .cloned()
                .collect(),
            digest: self.digest.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paired_labels_align_by_id_and_index() {
        let a = synthetic_corpus(SyntheticSpec::default());
        let mut b = a.subset(&["syn0001".to_string(), "syn0003".to_string()]);
        b.conversations.reverse();
        let (x, y) = a.paired_labels(&b).unwrap();
        let n = b.conversations.iter().map(Conversation::len).sum::<usize>();
        assert_eq!(x.len(), n);
        assert_eq!(x, y);
        let empty = Corpus {
            conversations: vec![],
            digest: String::new(),
        };
        assert!(matches!(a.paired_labels(&empty), Err(CorpusError::NoOverlap)));
    }
}
