//! Annotation sessions as replayed event logs.

use std::collections::BTreeSet;

use facedyn::corpus::Conversation;
use facedyn::taxonomy::{role_allows, FaceAct, FlowNode, FlowStep, Flowchart};
use serde::{Deserialize, Serialize};

use crate::ApiError;

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        session: String,
        annotator: String,
        conversation: String,
    },
    /// A flowchart answer for the utterance under the cursor.
    Answer { answer: String },
    /// Direct multi-label entry for the utterance under the cursor.
    Label { labels: BTreeSet<FaceAct> },
    /// Revert the most recent answer or label still in effect.
    Undo,
}

#[derive(Debug, Clone, PartialEq)]
enum Action {
    Answer(String),
    Label(BTreeSet<FaceAct>),
}

/// Materialized state of one session.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub annotator: String,
    pub conversation: String,
    /// Events after `Created`, in order. Their count is the version.
    pub events: Vec<Event>,
    pub cursor: usize,
    pub labels: Vec<Option<BTreeSet<FaceAct>>>,
    /// Answers given so far for the utterance under the cursor.
    pub path: Vec<String>,
}

/// Effect of an accepted event, for the response body.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Advanced,
    Recorded(BTreeSet<FaceAct>),
    Reverted,
}

impl Session {
    pub fn new(id: String, annotator: String, conversation: &Conversation) -> Session {
        Session {
            id,
            annotator,
            conversation: conversation.id.clone(),
            events: Vec::new(),
            cursor: 0,
            labels: vec![None; conversation.len()],
            path: Vec::new(),
        }
    }

    pub fn version(&self) -> usize {
        self.events.len()
    }

    pub fn done(&self) -> bool {
        self.cursor >= self.labels.len()
    }

    pub fn created_event(&self) -> Event {
        Event::Created {
            session: self.id.clone(),
            annotator: self.annotator.clone(),
            conversation: self.conversation.clone(),
        }
    }

    /// Flowchart node for the current utterance.
    pub fn node<'f>(&self, chart: &'f Flowchart) -> Result<&'f FlowNode, ApiError> {
        let mut node = chart.root();
        for a in &self.path {
            match chart.step(node, a).map_err(|e| ApiError::Internal(e.to_string()))? {
                FlowStep::Node(n) => node = n,
                FlowStep::Label(_) => return Err(ApiError::Internal("stored path passes a leaf".into())),
            }
        }
        Ok(node)
    }

    /// Check `event` against the current state and return the state it
    /// leads to, leaving `self` untouched.
    pub fn apply(&self, event: &Event, conv: &Conversation, chart: &Flowchart) -> Result<(Session, Outcome), ApiError> {
        let mut next = self.clone();
        next.events.push(event.clone());
        let outcome = match event {
            Event::Created { .. } => return Err(ApiError::Internal("duplicate creation event".into())),
            Event::Undo => {
                if self.actions().is_empty() {
                    return Err(ApiError::Conflict("nothing to undo".into()));
                }
                next.rebuild(conv, chart)?;
                Outcome::Reverted
            }
            Event::Answer { .. } | Event::Label { .. } if self.done() => {
                return Err(ApiError::Conflict("every utterance is already labeled".into()));
            }
            Event::Answer { answer } => {
                let role = conv.utterances[self.cursor].role;
                let node = self.node(chart)?;
                match chart
                    .step(node, answer)
                    .map_err(|e| ApiError::Unprocessable(e.to_string()))?
                {
                    FlowStep::Node(_) => {
                        next.path.push(answer.clone());
                        Outcome::Advanced
                    }
                    FlowStep::Label(l) => {
                        if !role_allows(role, l) {
                            return Err(ApiError::Unprocessable(format!("{l} is not valid for role {role}")));
                        }
                        let set = BTreeSet::from([l]);
                        next.commit(set.clone());
                        Outcome::Recorded(set)
                    }
                }
            }
            Event::Label { labels } => {
                let role = conv.utterances[self.cursor].role;
                if labels.is_empty() {
                    return Err(ApiError::Unprocessable("at least one label is required".into()));
                }
                if let Some(bad) = labels.iter().find(|l| !role_allows(role, **l)) {
                    return Err(ApiError::Unprocessable(format!("{bad} is not valid for role {role}")));
                }
                next.commit(labels.clone());
                Outcome::Recorded(labels.clone())
            }
        };
        Ok((next, outcome))
    }

    fn commit(&mut self, labels: BTreeSet<FaceAct>) {
        self.labels[self.cursor] = Some(labels);
        self.cursor += 1;
        self.path.clear();
    }

    /// Answers and labels still in effect after undos.
    fn actions(&self) -> Vec<Action> {
        let mut stack = Vec::new();
        for e in &self.events {
            match e {
                Event::Answer { answer } => stack.push(Action::Answer(answer.clone())),
                Event::Label { labels } => stack.push(Action::Label(labels.clone())),
                Event::Undo => {
                    stack.pop();
                }
                Event::Created { .. } => {}
            }
        }
        stack
    }

    /// Recompute cursor, labels and path from the event list.
    fn rebuild(&mut self, conv: &Conversation, chart: &Flowchart) -> Result<(), ApiError> {
        self.cursor = 0;
        self.labels = vec![None; conv.len()];
        self.path.clear();
        for action in self.actions() {
            match action {
                Action::Label(set) => self.commit(set),
                Action::Answer(a) => {
                    let node = self.node(chart)?;
                    match chart.step(node, &a).map_err(|e| ApiError::Internal(e.to_string()))? {
                        FlowStep::Node(_) => self.path.push(a),
                        FlowStep::Label(l) => self.commit(BTreeSet::from([l])),
                    }
                }
            }
        }
        Ok(())
    }

    /// Rebuild a session from its log lines (the first is `Created`).
    pub fn replay(
        created: (String, String),
        events: Vec<Event>,
        conv: &Conversation,
        chart: &Flowchart,
    ) -> Result<Session, ApiError> {
        let mut s = Session::new(created.0, created.1, conv);
        for e in events {
            s = s.apply(&e, conv, chart)?.0;
        }
        Ok(s)
    }
}
