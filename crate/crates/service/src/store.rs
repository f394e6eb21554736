//! Sessions in memory, backed by one append-only JSONL log per session.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use facedyn::corpus::{select_gold_label, serialize_corpus, Conversation, Corpus, Utterance, DEFAULT_SEED};
use facedyn::taxonomy::{cohens_kappa, Agreement, Flowchart};

use crate::session::{Event, Outcome, Session};
use crate::ApiError;

pub struct Store {
    corpus: Corpus,
    chart: Flowchart,
    log_dir: Option<PathBuf>,
    inner: Mutex<Inner>,
}

#[derive(Default)]
struct Inner {
    sessions: BTreeMap<String, Session>,
    next: usize,
}

fn io_err(path: &Path, e: std::io::Error) -> ApiError {
    ApiError::Internal(format!("{}: {e}", path.display()))
}

impl Store {
    /// Open a store over `corpus`, replaying any session logs in `log_dir`.
    pub fn open(corpus: Corpus, chart: Flowchart, log_dir: Option<PathBuf>) -> Result<Store, ApiError> {
        let mut inner = Inner::default();
        if let Some(dir) = &log_dir {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| io_err(dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            files.sort();
            for path in files {
                let s = load_log(&path, &corpus, &chart)?;
                if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<usize>().ok()) {
                    inner.next = inner.next.max(n + 1);
                }
                inner.sessions.insert(s.id.clone(), s);
            }
        }
        Ok(Store {
            corpus,
            chart,
            log_dir,
            inner: Mutex::new(inner),
        })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn flowchart(&self) -> &Flowchart {
        &self.chart
    }

    pub fn conversation(&self, id: &str) -> Result<&Conversation, ApiError> {
        self.corpus
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("conversation {id}")))
    }

    fn append(&self, session: &str, events: &[Event]) -> Result<(), ApiError> {
        let Some(dir) = &self.log_dir else {
            return Ok(());
        };
        let path = dir.join(format!("{session}.jsonl"));
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("event serializes"));
            buf.push('\n');
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        // One write per event batch; a torn tail is dropped on replay.
        f.write_all(buf.as_bytes()).map_err(|e| io_err(&path, e))?;
        f.sync_data().map_err(|e| io_err(&path, e))
    }

    pub fn create_session(&self, annotator: &str, conversation: &str) -> Result<Session, ApiError> {
        let conv = self.conversation(conversation)?;
        let mut inner = self.inner.lock().expect("store lock");
        let id = format!("s{:06}", inner.next);
        let s = Session::new(id.clone(), annotator.to_string(), conv);
        self.append(&id, &[s.created_event()])?;
        inner.next += 1;
        inner.sessions.insert(id, s.clone());
        Ok(s)
    }

    pub fn session(&self, id: &str, annotator: &str) -> Result<Session, ApiError> {
        let inner = self.inner.lock().expect("store lock");
        let s = inner
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("session {id}")))?;
        if s.annotator != annotator {
            return Err(ApiError::Forbidden(format!(
                "session {id} belongs to another annotator"
            )));
        }
        Ok(s.clone())
    }

    /// Apply `event` if `version` matches the session's current version.
    pub fn submit(
        &self,
        id: &str,
        annotator: &str,
        version: usize,
        event: Event,
    ) -> Result<(Session, Outcome), ApiError> {
        let mut inner = self.inner.lock().expect("store lock");
        let s = inner
            .sessions
            .get(id)
            .ok_or_else(|| ApiError::NotFound(format!("session {id}")))?;
        if s.annotator != annotator {
            return Err(ApiError::Forbidden(format!(
                "session {id} belongs to another annotator"
            )));
        }
        if s.version() != version {
            return Err(ApiError::Conflict(format!(
                "stale version {version}; session is at {}",
                s.version()
            )));
        }
        let conv = self.conversation(&s.conversation)?;
        let (next, outcome) = s.apply(&event, conv, &self.chart)?;
        self.append(id, &[event])?;
        inner.sessions.insert(id.to_string(), next.clone());
        Ok((next, outcome))
    }

    pub fn annotators(&self) -> Vec<String> {
        let inner = self.inner.lock().expect("store lock");
        let mut v: Vec<String> = inner.sessions.values().map(|s| s.annotator.clone()).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Conversations the annotator has finished, labeled by their most
    /// recent finished session, in source order.
    pub fn export(&self, annotator: &str) -> Result<Corpus, ApiError> {
        let inner = self.inner.lock().expect("store lock");
        if !inner.sessions.values().any(|s| s.annotator == annotator) {
            return Err(ApiError::NotFound(format!("annotator {annotator}")));
        }
        let mut latest: BTreeMap<&str, &Session> = BTreeMap::new();
        for s in inner.sessions.values().filter(|s| s.annotator == annotator && s.done()) {
            latest.insert(s.conversation.as_str(), s);
        }
        let conversations: Vec<Conversation> = self
            .corpus
            .conversations
            .iter()
            .filter_map(|c| latest.get(c.id.as_str()).map(|s| (c, *s)))
            .map(|(c, s)| Conversation {
                id: c.id.clone(),
                outcome: c.outcome,
                utterances: c
                    .utterances
                    .iter()
                    .zip(&s.labels)
                    .map(|(u, l)| {
                        let gold = l.clone().unwrap_or_default();
                        Utterance {
                            selected_gold: select_gold_label(&c.id, u.index, &gold, DEFAULT_SEED)
                                .expect("finished sessions label every utterance"),
                            gold_labels: gold,
                            ..u.clone()
                        }
                    })
                    .collect(),
            })
            .collect();
        if conversations.is_empty() {
            return Err(ApiError::NotFound(format!(
                "annotator {annotator} has no finished conversations"
            )));
        }
        let mut corpus = Corpus {
            conversations,
            digest: String::new(),
        };
        corpus.digest = facedyn::corpus::CorpusReader::default()
            .parse_str(&serialize_corpus(&corpus))
            .map_err(|e| ApiError::Internal(format!("export failed validation: {e}")))?
            .digest;
        Ok(corpus)
    }

    /// Kappa over the utterances both annotators labeled in finished
    /// conversations, the same pairing `kappa` applies to two exports.
    pub fn agreement(&self, a: &str, b: &str) -> Result<Agreement, ApiError> {
        let ea = self.export(a)?;
        let eb = self.export(b)?;
        let (x, y) = ea
            .paired_labels(&eb)
            .map_err(|e| ApiError::Unprocessable(e.to_string()))?;
        cohens_kappa(&x, &y).map_err(|e| ApiError::Unprocessable(e.to_string()))
    }
}

fn load_log(path: &Path, corpus: &Corpus, chart: &Flowchart) -> Result<Session, ApiError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let complete = if text.ends_with('\n') {
        text.as_str()
    } else {
        log::warn!("{}: dropping torn final line", path.display());
        text.rfind('\n').map_or("", |i| &text[..=i])
    };
    let mut events = complete
        .lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<Event>(l)
                .map_err(|e| ApiError::Internal(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let Some(Event::Created {
        session,
        annotator,
        conversation,
    }) = events.next()
    else {
        return Err(ApiError::Internal(format!(
            "{}: log does not start with a creation event",
            path.display()
        )));
    };
    let conv = corpus
        .get(&conversation)
        .ok_or_else(|| ApiError::Internal(format!("{}: unknown conversation {conversation}", path.display())))?;
    Session::replay((session, annotator), events.collect(), conv, chart)
}
