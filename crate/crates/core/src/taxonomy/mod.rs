//! Face-act label space, role scoping, the annotation flowchart and
//! inter-annotator agreement.

mod agreement;
mod flowchart;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use agreement::{cohens_kappa, contingency, Agreement};
pub use flowchart::{FlowNode, FlowStep, Flowchart, DEFAULT_FLOWCHART};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("unknown face act {0:?}")]
    UnknownFaceAct(String),
    #[error("unknown role {0:?} (expected ER or EE)")]
    UnknownRole(String),
    #[error("unknown scope {0:?} (expected er, ee or all)")]
    UnknownScope(String),
    #[error("node {node:?} has no answer {answer:?}; valid answers: {}", valid.join(", "))]
    UndeclaredAnswer {
        node: String,
        answer: String,
        valid: Vec<String>,
    },
    #[error("unknown flowchart node {0:?}")]
    UnknownNode(String),
    #[error("invalid flowchart: {0}")]
    InvalidFlowchart(String),
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label sequences are empty")]
    Empty,
}

/// Whose face an act targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Speaker,
    Hearer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Face {
    Positive,
    Negative,
}

/// Raise (+) or attack (−).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Raise,
    Attack,
}

/// One of the eight composite face acts, or `Other`.
///
/// The declaration order is the canonical ordering used everywhere a list of
/// acts is printed or indexed (tables, label spaces, one-hot columns).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaceAct {
    SPosRaise,
    SPosAttack,
    HPosRaise,
    HPosAttack,
    SNegRaise,
    SNegAttack,
    HNegRaise,
    HNegAttack,
    Other,
}

impl FaceAct {
    pub const ALL: [FaceAct; 9] = [
        FaceAct::SPosRaise,
        FaceAct::SPosAttack,
        FaceAct::HPosRaise,
        FaceAct::HPosAttack,
        FaceAct::SNegRaise,
        FaceAct::SNegAttack,
        FaceAct::HNegRaise,
        FaceAct::HNegAttack,
        FaceAct::Other,
    ];

    pub fn compose(target: Target, face: Face, polarity: Polarity) -> FaceAct {
        use {Face::*, Polarity::*, Target::*};
        match (target, face, polarity) {
            (Speaker, Positive, Raise) => FaceAct::SPosRaise,
            (Speaker, Positive, Attack) => FaceAct::SPosAttack,
            (Hearer, Positive, Raise) => FaceAct::HPosRaise,
            (Hearer, Positive, Attack) => FaceAct::HPosAttack,
            (Speaker, Negative, Raise) => FaceAct::SNegRaise,
            (Speaker, Negative, Attack) => FaceAct::SNegAttack,
            (Hearer, Negative, Raise) => FaceAct::HNegRaise,
            (Hearer, Negative, Attack) => FaceAct::HNegAttack,
        }
    }

    /// Components of a composite act; `None` for `Other`.
    pub fn parts(self) -> Option<(Target, Face, Polarity)> {
        use {Face::*, Polarity::*, Target::*};
        Some(match self {
            FaceAct::SPosRaise => (Speaker, Positive, Raise),
            FaceAct::SPosAttack => (Speaker, Positive, Attack),
            FaceAct::HPosRaise => (Hearer, Positive, Raise),
            FaceAct::HPosAttack => (Hearer, Positive, Attack),
            FaceAct::SNegRaise => (Speaker, Negative, Raise),
            FaceAct::SNegAttack => (Speaker, Negative, Attack),
            FaceAct::HNegRaise => (Hearer, Negative, Raise),
            FaceAct::HNegAttack => (Hearer, Negative, Attack),
            FaceAct::Other => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FaceAct::SPosRaise => "SPos+",
            FaceAct::SPosAttack => "SPos-",
            FaceAct::HPosRaise => "HPos+",
            FaceAct::HPosAttack => "HPos-",
            FaceAct::SNegRaise => "SNeg+",
            FaceAct::SNegAttack => "SNeg-",
            FaceAct::HNegRaise => "HNeg+",
            FaceAct::HNegAttack => "HNeg-",
            FaceAct::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FaceAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaceAct {
    type Err = TaxonomyError;

    /// Case-insensitive; accepts ASCII `-`, U+2212 and U+2013 for attack.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| match c {
                '\u{2212}' | '\u{2013}' => '-',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        FaceAct::ALL
            .iter()
            .copied()
            .find(|a| a.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| TaxonomyError::UnknownFaceAct(s.to_string()))
    }
}

impl Serialize for FaceAct {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for FaceAct {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Conversation participant: persuader (ER) or persuadee (EE).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Er,
    Ee,
}

impl Role {
    pub const BOTH: [Role; 2] = [Role::Er, Role::Ee];

    pub fn name(self) -> &'static str {
        match self {
            Role::Er => "ER",
            Role::Ee => "EE",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = TaxonomyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ER" => Ok(Role::Er),
            "EE" => Ok(Role::Ee),
            _ => Err(TaxonomyError::UnknownRole(s.to_string())),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which utterances a model predicts for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scope {
    Er,
    Ee,
    #[default]
    All,
}

impl Scope {
    pub fn includes(self, role: Role) -> bool {
        matches!(
            (self, role),
            (Scope::All, _) | (Scope::Er, Role::Er) | (Scope::Ee, Role::Ee)
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Scope::Er => "er",
            Scope::Ee => "ee",
            Scope::All => "all",
        }
    }
}

impl From<Role> for Scope {
    fn from(r: Role) -> Self {
        match r {
            Role::Er => Scope::Er,
            Role::Ee => Scope::Ee,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scope {
    type Err = TaxonomyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "er" => Ok(Scope::Er),
            "ee" => Ok(Scope::Ee),
            "all" => Ok(Scope::All),
            _ => Err(TaxonomyError::UnknownScope(s.to_string())),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const ER_LABELS: [FaceAct; 6] = [
    FaceAct::SPosRaise,
    FaceAct::HPosRaise,
    FaceAct::HPosAttack,
    FaceAct::HNegRaise,
    FaceAct::HNegAttack,
    FaceAct::Other,
];

const EE_LABELS: [FaceAct; 7] = [
    FaceAct::SPosRaise,
    FaceAct::SPosAttack,
    FaceAct::HPosRaise,
    FaceAct::HPosAttack,
    FaceAct::SNegRaise,
    FaceAct::HNegAttack,
    FaceAct::Other,
];

const ALL_LABELS: [FaceAct; 8] = [
    FaceAct::SPosRaise,
    FaceAct::SPosAttack,
    FaceAct::HPosRaise,
    FaceAct::HPosAttack,
    FaceAct::SNegRaise,
    FaceAct::HNegRaise,
    FaceAct::HNegAttack,
    FaceAct::Other,
];

/// Labels a model with the given scope predicts, in canonical order.
///
/// ER never self-attacks or rejects, EE never reduces the imposition of a
/// request, and SNeg- does not occur for either role, so those acts are left
/// out of the respective spaces.
pub fn label_space(scope: Scope) -> &'static [FaceAct] {
    match scope {
        Scope::Er => &ER_LABELS,
        Scope::Ee => &EE_LABELS,
        Scope::All => &ALL_LABELS,
    }
}

/// Whether `act` may be assigned to an utterance spoken by `role`.
pub fn role_allows(role: Role, act: FaceAct) -> bool {
    label_space(role.into()).contains(&act)
}
