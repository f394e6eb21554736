//! Synthetic persuasion conversations for tests, demos and smoke runs.
//!
//! Utterance text is drawn from short templates per face act, so labels are
//! learnable from the words; role constraints and the donor/non-donor
//! split are respected.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{io::serialize_corpus, Conversation, Corpus, Outcome, Utterance};
use crate::taxonomy::{label_space, FaceAct, Role, Scope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub donors: usize,
    pub non_donors: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            donors: 8,
            non_donors: 4,
            min_len: 4,
            max_len: 10,
            seed: 13,
        }
    }
}

/// Example phrasings per face act.
pub fn templates(act: FaceAct) -> &'static [&'static str] {
    match act {
        FaceAct::SPosRaise => &[
            "our charity has helped thousands of children",
            "i have donated to this cause myself",
            "we are a trusted organization",
        ],
        FaceAct::SPosAttack => &["sorry, i was wrong about that", "my apologies for the confusion"],
        FaceAct::HPosRaise => &[
            "you seem like a very kind person",
            "that is a great point, thank you",
            "i really appreciate your generosity",
        ],
        FaceAct::HPosAttack => &[
            "you should care more about these kids",
            "that is not really a good excuse",
        ],
        FaceAct::SNegRaise => &[
            "i do not wish to donate",
            "no thanks, i would rather keep my money",
            "i am not comfortable giving right now",
        ],
        FaceAct::SNegAttack => &["okay, i will give you my payment details"],
        FaceAct::HNegRaise => &[
            "any amount, even a small one, would help",
            "you can donate directly from your task payment",
        ],
        FaceAct::HNegAttack => &[
            "would you like to donate to save the children",
            "how much would you like to give today",
            "please consider making a donation",
        ],
        FaceAct::Other => &[
            "hello, how are you doing",
            "i am fine, thanks for asking",
            "have a nice day",
            "what do you do for a living",
        ],
    }
}

fn role_acts(role: Role) -> Vec<FaceAct> {
    label_space(Scope::from(role)).to_vec()
}

/// Generate a corpus; the digest is that of its canonical serialization.
pub fn synthetic_corpus(spec: SyntheticSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let er = role_acts(Role::Er);
    let ee = role_acts(Role::Ee);
    let mut conversations = Vec::new();
    for i in 0..spec.donors + spec.non_donors {
        let outcome = if i < spec.donors {
            Outcome::Donor
        } else {
            Outcome::NonDonor
        };
        let n = rng.random_range(spec.min_len..=spec.max_len.max(spec.min_len));
        let utterances = (0..n)
            .map(|index| {
                let role = if index % 2 == 0 { Role::Er } else { Role::Ee };
                let pool = if role == Role::Er { &er } else { &ee };
                let act = match (role, outcome) {
                    // Non-donors reject more often; donors praise more.
                    (Role::Ee, Outcome::NonDonor) if rng.random_bool(0.3) => FaceAct::SNegRaise,
                    (Role::Ee, Outcome::Donor) if rng.random_bool(0.2) => FaceAct::HPosRaise,
                    _ => *pool.choose(&mut rng).expect("non-empty label space"),
                };
                let text = templates(act).choose(&mut rng).expect("templates").to_string();
                Utterance {
                    index,
                    turn: Some((index / 2) as u32),
                    role,
                    text,
                    gold_labels: BTreeSet::from([act]),
                    selected_gold: act,
                }
            })
            .collect();
        conversations.push(Conversation {
            id: format!("syn{i:04}"),
            utterances,
            outcome,
        });
    }
    let mut corpus = Corpus {
        conversations,
        digest: String::new(),
    };
    let text = serialize_corpus(&corpus);
    corpus.digest = hex::encode(<sha2::Sha256 as sha2::Digest>::digest(text.as_bytes()));
    corpus
}
