//! Annotation decision flowchart, loaded from a versioned JSON definition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FaceAct, TaxonomyError};

/// The bundled coding-manual flowchart.
pub const DEFAULT_FLOWCHART: &str = include_str!("../../data/flowchart.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowTarget {
    Goto(String),
    Label(FaceAct),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAnswer {
    pub text: String,
    #[serde(flatten)]
    pub next: FlowTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNode {
    pub id: String,
    pub question: String,
    pub answers: Vec<FlowAnswer>,
}

impl FlowNode {
    pub fn answer_texts(&self) -> Vec<String> {
        self.answers.iter().map(|a| a.text.clone()).collect()
    }
}

/// Result of answering one flowchart question.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowStep<'a> {
    Node(&'a FlowNode),
    Label(FaceAct),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowchartFile {
    version: u32,
    #[serde(default)]
    title: String,
    #[serde(default)]
    note: String,
    root: String,
    nodes: Vec<FlowNode>,
}

/// A validated rooted DAG of questions whose leaves are face acts.
#[derive(Debug, Clone)]
pub struct Flowchart {
    pub version: u32,
    pub title: String,
    pub note: String,
    root: String,
    nodes: BTreeMap<String, FlowNode>,
    depth: usize,
}

impl Flowchart {
    pub fn bundled() -> Flowchart {
        Flowchart::from_json(DEFAULT_FLOWCHART).expect("bundled flowchart is valid")
    }

    pub fn from_json(text: &str) -> Result<Flowchart, TaxonomyError> {
        let file: FlowchartFile =
            serde_json::from_str(text).map_err(|e| TaxonomyError::InvalidFlowchart(e.to_string()))?;
        let mut nodes = BTreeMap::new();
        for node in file.nodes {
            if node.answers.is_empty() {
                return Err(TaxonomyError::InvalidFlowchart(format!(
                    "node {:?} has no answers",
                    node.id
                )));
            }
            let mut seen = BTreeSet::new();
            for a in &node.answers {
                if !seen.insert(normalize(&a.text)) {
                    return Err(TaxonomyError::InvalidFlowchart(format!(
                        "node {:?} declares answer {:?} twice",
                        node.id, a.text
                    )));
                }
            }
            let id = node.id.clone();
            if nodes.insert(id.clone(), node).is_some() {
                return Err(TaxonomyError::InvalidFlowchart(format!("duplicate node id {id:?}")));
            }
        }
        let mut chart = Flowchart {
            version: file.version,
            title: file.title,
            note: file.note,
            root: file.root,
            nodes,
            depth: 0,
        };
        chart.depth = chart.validate()?;
        Ok(chart)
    }

    pub fn to_json(&self) -> String {
        let file = FlowchartFile {
            version: self.version,
            title: self.title.clone(),
            note: self.note.clone(),
            root: self.root.clone(),
            nodes: self.nodes.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("serializable")
    }

    /// Checks reachability, acyclicity and label coverage; returns the
    /// length of the longest root-to-leaf path in questions asked.
    fn validate(&self) -> Result<usize, TaxonomyError> {
        let invalid = |m: String| Err(TaxonomyError::InvalidFlowchart(m));
        if !self.nodes.contains_key(&self.root) {
            return invalid(format!("root {:?} is not a node", self.root));
        }
        for node in self.nodes.values() {
            for a in &node.answers {
                if let FlowTarget::Goto(next) = &a.next {
                    if !self.nodes.contains_key(next) {
                        return invalid(format!(
                            "node {:?} answer {:?} points to unknown node {next:?}",
                            node.id, a.text
                        ));
                    }
                }
            }
        }

        // Depth-first search with colouring: 1 = on stack, 2 = done.
        let mut state: BTreeMap<&str, u8> = BTreeMap::new();
        let mut depth: BTreeMap<&str, usize> = BTreeMap::new();
        let mut labels = BTreeSet::new();
        fn visit<'a>(
            chart: &'a Flowchart,
            id: &'a str,
            state: &mut BTreeMap<&'a str, u8>,
            depth: &mut BTreeMap<&'a str, usize>,
            labels: &mut BTreeSet<FaceAct>,
        ) -> Result<usize, TaxonomyError> {
            match state.get(id) {
                Some(1) => return Err(TaxonomyError::InvalidFlowchart(format!("cycle through node {id:?}"))),
                Some(_) => return Ok(depth[id]),
                None => {}
            }
            state.insert(id, 1);
            let mut d = 1;
            for a in &chart.nodes[id].answers {
                match &a.next {
                    FlowTarget::Label(l) => {
                        labels.insert(*l);
                    }
                    FlowTarget::Goto(next) => {
                        d = d.max(1 + visit(chart, next, state, depth, labels)?);
                    }
                }
            }
            state.insert(id, 2);
            depth.insert(id, d);
            Ok(d)
        }
        let max_depth = visit(self, &self.root, &mut state, &mut depth, &mut labels)?;

        if let Some(orphan) = self.nodes.keys().find(|k| !state.contains_key(k.as_str())) {
            return invalid(format!("node {orphan:?} is unreachable from the root"));
        }
        let missing: Vec<&str> = FaceAct::ALL
            .iter()
            .filter(|a| !labels.contains(a))
            .map(|a| a.name())
            .collect();
        if !missing.is_empty() {
            return invalid(format!("labels not reachable: {}", missing.join(", ")));
        }
        Ok(max_depth)
    }

    pub fn root(&self) -> &FlowNode {
        &self.nodes[&self.root]
    }

    pub fn node(&self, id: &str) -> Result<&FlowNode, TaxonomyError> {
        self.nodes
            .get(id)
            .ok_or_else(|| TaxonomyError::UnknownNode(id.to_string()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &FlowNode> {
        self.nodes.values()
    }

    /// Maximum number of questions asked on any path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Answer the question at `node`. Answers match case-insensitively,
    /// either by text or by 1-based position.
    pub fn step(&self, node: &FlowNode, answer: &str) -> Result<FlowStep<'_>, TaxonomyError> {
        let wanted = normalize(answer);
        let by_position = wanted
            .parse::<usize>()
            .ok()
            .and_then(|i| i.checked_sub(1))
            .and_then(|i| node.answers.get(i));
        let chosen = node
            .answers
            .iter()
            .find(|a| normalize(&a.text) == wanted)
            .or(by_position)
            .ok_or_else(|| TaxonomyError::UndeclaredAnswer {
                node: node.id.clone(),
                answer: answer.to_string(),
                valid: node.answer_texts(),
            })?;
        Ok(match &chosen.next {
            FlowTarget::Label(l) => FlowStep::Label(*l),
            FlowTarget::Goto(next) => FlowStep::Node(self.node(next)?),
        })
    }

    /// Follow a full answer path from the root to a label.
    pub fn walk<S: AsRef<str>>(&self, answers: &[S]) -> Result<FaceAct, TaxonomyError> {
        let mut node = self.root();
        for answer in answers {
            match self.step(node, answer.as_ref())? {
                FlowStep::Label(l) => return Ok(l),
                FlowStep::Node(n) => node = n,
            }
        }
        Err(TaxonomyError::InvalidFlowchart(format!(
            "answer path ended at non-terminal node {:?}",
            node.id
        )))
    }

    /// Every root-to-leaf answer path with its label.
    pub fn paths(&self) -> Vec<(Vec<String>, FaceAct)> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root(), Vec::<String>::new())];
        while let Some((node, prefix)) = stack.pop() {
            for a in &node.answers {
                let mut path = prefix.clone();
                path.push(a.text.clone());
                match &a.next {
                    FlowTarget::Label(l) => out.push((path, *l)),
                    FlowTarget::Goto(n) => stack.push((&self.nodes[n], path)),
                }
            }
        }
        out
    }
}

fn normalize(s: &str) -> String {
    s.trim().to_lowercase()
}
