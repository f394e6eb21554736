use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, Outcome};

/// One cross-validation split. Ids are listed in corpus order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// Outcome-stratified k-fold split.
///
/// Each class is shuffled under `seed` and dealt round-robin, so every fold
/// holds ~1/k of the donors and ~1/k of the non-donors, and the validation
/// sets partition the corpus.
pub fn stratified_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<Vec<FoldSplit>, CorpusError> {
    let mut fold_of = vec![usize::MAX; corpus.len()];
    for (tag, class) in [(0u64, Outcome::Donor), (1, Outcome::NonDonor)] {
        let mut members: Vec<usize> = corpus
            .conversations
            .iter()
            .enumerate()
            .filter(|(_, c)| c.outcome == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k || k == 0 {
            return Err(CorpusError::TooFewForFolds {
                k,
                class,
                count: members.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag);
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            fold_of[idx] = pos % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (val, train): (Vec<_>, Vec<_>) =
                corpus.conversations.iter().zip(&fold_of).partition(|(_, &fo)| fo == f);
            FoldSplit {
                fold_index: f,
                val_ids: val.into_iter().map(|(c, _)| c.id.clone()).collect(),
                train_ids: train.into_iter().map(|(c, _)| c.id.clone()).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::corpus::{Conversation, Utterance};
    use crate::taxonomy::{FaceAct, Role};
    use proptest::prelude::*;

    pub(crate) fn toy_corpus(donors: usize, non_donors: usize) -> Corpus {
        let conv = |i: usize, outcome| Conversation {
            id: format!("c{i:03}"),
            outcome,
            utterances: vec![Utterance {
                index: 0,
                turn: None,
                role: Role::Er,
                text: "hi".into(),
                gold_labels: [FaceAct::Other].into_iter().collect(),
                selected_gold: FaceAct::Other,
            }],
        };
        Corpus {
            conversations: (0..donors)
                .map(|i| conv(i, Outcome::Donor))
                .chain((0..non_donors).map(|i| conv(donors + i, Outcome::NonDonor)))
                .collect(),
            digest: String::new(),
        }
    }

    fn class_count(c: &Corpus, ids: &[String], o: Outcome) -> usize {
        ids.iter().filter(|id| c.get(id).unwrap().outcome == o).count()
    }

    #[test]
    fn even_division() {
        let c = toy_corpus(5, 5);
        let folds = stratified_folds(&c, 5, 13).unwrap();
        for f in &folds {
            assert_eq!(class_count(&c, &f.val_ids, Outcome::Donor), 1);
            assert_eq!(class_count(&c, &f.val_ids, Outcome::NonDonor), 1);
            assert_eq!(f.train_ids.len(), 8);
        }
    }

    #[test]
    fn full_corpus_sizes() {
        // 231 = 47 + 4 * 46 and 65 = 5 * 13.
        let c = toy_corpus(231, 65);
        let folds = stratified_folds(&c, 5, 13).unwrap();
        let donors: Vec<usize> = folds
            .iter()
            .map(|f| class_count(&c, &f.val_ids, Outcome::Donor))
            .collect();
        let non: Vec<usize> = folds
            .iter()
            .map(|f| class_count(&c, &f.val_ids, Outcome::NonDonor))
            .collect();
        assert_eq!(donors.iter().sum::<usize>(), 231);
        assert!(donors.iter().all(|&d| d == 46 || d == 47));
        assert_eq!(non, vec![13; 5]);
    }

    #[test]
    fn too_small() {
        let c = toy_corpus(2, 1);
        assert!(matches!(
            stratified_folds(&c, 5, 13),
            Err(CorpusError::TooFewForFolds { k: 5, .. })
        ));
    }

    #[test]
    fn seed_determinism() {
        let c = toy_corpus(20, 10);
        assert_eq!(stratified_folds(&c, 5, 7).unwrap(), stratified_folds(&c, 5, 7).unwrap());
        assert_ne!(stratified_folds(&c, 5, 7).unwrap(), stratified_folds(&c, 5, 8).unwrap());
    }

    proptest! {
        #[test]
        fn validation_sets_partition(d in 5usize..40, n in 5usize..40, k in 2usize..6, seed in 0u64..1000) {
            let c = toy_corpus(d, n);
            let folds = stratified_folds(&c, k, seed).unwrap();
            let mut seen = BTreeSet::new();
            for f in &folds {
                for id in &f.val_ids {
                    prop_assert!(seen.insert(id.clone()));
                }
                let val: BTreeSet<_> = f.val_ids.iter().collect();
                prop_assert!(f.train_ids.iter().all(|t| !val.contains(t)));
                prop_assert_eq!(f.train_ids.len() + f.val_ids.len(), c.len());
            }
            prop_assert_eq!(seen.len(), c.len());
            for o in [Outcome::Donor, Outcome::NonDonor] {
                let sizes: Vec<usize> = folds.iter().map(|f| class_count(&c, &f.val_ids, o)).collect();
                prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            }
        }
    }
}
