use std::collections::BTreeSet;

use sha2::{Digest, Sha256};

use crate::taxonomy::FaceAct;

/// Pick one gold label from a multi-label set.
///
/// The choice is a keyed hash of `(seed, conversation id, utterance index)`,
/// so it does not depend on the order utterances are visited in. Returns
/// `None` for an empty set.
pub fn select_gold_label(conv_id: &str, index: usize, labels: &BTreeSet<FaceAct>, seed: u64) -> Option<FaceAct> {
    match labels.len() {
        0 => None,
        1 => labels.iter().next().copied(),
        n => {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update((conv_id.len() as u64).to_le_bytes());
            h.update(conv_id.as_bytes());
            h.update((index as u64).to_le_bytes());
            let digest = h.finalize();
            let mut word = [0u8; 8];
            word.copy_from_slice(&digest[..8]);
            let pick = (u64::from_le_bytes(word) % n as u64) as usize;
            labels.iter().nth(pick).copied()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[FaceAct]) -> BTreeSet<FaceAct> {
        xs.iter().copied().collect()
    }

    #[test]
    fn singleton() {
        let s = set(&[FaceAct::SNegRaise]);
        assert_eq!(select_gold_label("c", 3, &s, 99), Some(FaceAct::SNegRaise));
    }

    #[test]
    fn empty_set_has_no_label() {
        assert_eq!(select_gold_label("c", 0, &BTreeSet::new(), 1), None);
    }

    #[test]
    fn deterministic_and_member() {
        let s = set(&[FaceAct::SPosRaise, FaceAct::SNegRaise]);
        let first = select_gold_label("conv-7", 4, &s, 13).unwrap();
        for _ in 0..10 {
            assert_eq!(select_gold_label("conv-7", 4, &s, 13), Some(first));
        }
        assert!(s.contains(&first));
    }

    #[test]
    fn both_labels_get_picked_across_utterances() {
        let s = set(&[FaceAct::SPosRaise, FaceAct::SNegRaise]);
        let picks: BTreeSet<FaceAct> = (0..64).filter_map(|i| select_gold_label("c", i, &s, 13)).collect();
        assert_eq!(picks, s);
    }
}
