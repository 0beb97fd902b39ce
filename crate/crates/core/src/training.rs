//! Bits shared by both trainers.

use rand::seq::SliceRandom;

use crate::rng::{self, Component};

/// Summed loss over an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    /// Sentences that produced a parameter update.
    pub updates: usize,
    /// Loss terms evaluated (configurations or sentences).
    pub decisions: usize,
}

impl LossStats {
    pub fn merge(&mut self, other: LossStats) {
        self.loss += other.loss;
        self.updates += other.updates;
        self.decisions += other.decisions;
    }
}

/// Sentence visiting order for one epoch.
pub fn epoch_order(len: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, Component::Shuffle, epoch));
    order
}

/// Index of the highest allowed value; the lowest index wins ties.
pub fn masked_argmax(values: &[f64], allowed: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(allowed).enumerate() {
        if ok && best.map_or(true, |b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_respects_mask_and_ties() {
        assert_eq!(masked_argmax(&[5.0, 1.0, 1.0], &[false, true, true]), Some(1));
        assert_eq!(masked_argmax(&[5.0, 1.0], &[false, false]), None);
    }

    #[test]
    fn epoch_order_is_a_permutation() {
        let mut o = epoch_order(50, 3, 1);
        assert_ne!(o, (0..50).collect::<Vec<_>>());
        o.sort();
        assert_eq!(o, (0..50).collect::<Vec<_>>());
        assert_eq!(epoch_order(50, 3, 1), epoch_order(50, 3, 1));
    }
}
