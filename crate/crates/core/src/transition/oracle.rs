//! Static oracles for arc-standard with SWAP.
//!
//! The lazy oracle delays SWAP while the top of the stack and the front of
//! the buffer belong to the same maximal projective component (MPC), which
//! keeps the number of swaps low. The eager variant swaps as soon as the
//! projective order demands it and is kept as a baseline.

use thiserror::Error;

use super::system::{Configuration, Transition};
use crate::treebank::{projective_order, DepTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("oracle reached a configuration not reachable from the gold tree (stack {stack:?}, buffer {buffer:?})")]
    Unreachable { stack: Vec<usize>, buffer: Vec<usize> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwapStrategy {
    Lazy,
    Eager,
}

/// Gold-standard information the oracle consults.
#[derive(Clone, Debug)]
pub struct Oracle {
    heads: Vec<usize>,
    labels: Vec<usize>,
    /// Projective-order rank per node, root included (rank 0).
    order: Vec<usize>,
    /// MPC root per node.
    mpc: Vec<usize>,
    child_count: Vec<usize>,
    strategy: SwapStrategy,
}

impl Oracle {
    /// `labels[i - 1]` is the label id of token `i`.
    pub fn new(tree: &DepTree, labels: Vec<usize>, strategy: SwapStrategy) -> Self {
        let n = tree.len();
        let mut heads = vec![0; n + 1];
        let mut child_count = vec![0; n + 1];
        for d in 1..=n {
            heads[d] = tree.head(d);
            child_count[tree.head(d)] += 1;
        }
        let mut order = vec![0; n + 1];
        order[1..].copy_from_slice(&projective_order(tree));
        let mut labels_full = vec![0; n + 1];
        labels_full[1..].copy_from_slice(&labels);
        let mpc = maximal_projective_components(&heads, &child_count);
        Oracle {
            heads,
            labels: labels_full,
            order,
            mpc,
            child_count,
            strategy,
        }
    }

    /// MPC root of each node (index 0 is the root itself).
    pub fn components(&self) -> &[usize] {
        &self.mpc
    }

    fn complete(&self, config: &Configuration, token: usize) -> bool {
        config.children(token).len() == self.child_count[token]
    }

    pub fn next(&self, config: &Configuration) -> Result<Transition, OracleError> {
        if let (Some(s1), Some(s0)) = (config.stack_item(1), config.stack_item(0)) {
            if s1 != 0 && self.heads[s1] == s0 && self.complete(config, s1) {
                return Ok(Transition::LeftArc(self.labels[s1]));
            }
            if self.heads[s0] == s1 && self.complete(config, s0) {
                return Ok(Transition::RightArc(self.labels[s0]));
            }
            if self.order[s0] < self.order[s1] {
                let delay = match self.strategy {
                    SwapStrategy::Eager => false,
                    SwapStrategy::Lazy => config.buffer_item(0).is_some_and(|b0| self.mpc[b0] == self.mpc[s0]),
                };
                if !delay {
                    return self.checked(config, Transition::Swap);
                }
            }
        }
        self.checked(config, Transition::Shift)
    }

    fn checked(&self, config: &Configuration, t: Transition) -> Result<Transition, OracleError> {
        if config.is_legal(t) {
            Ok(t)
        } else {
            Err(OracleError::Unreachable {
                stack: config.stack.clone(),
                buffer: config.buffer.iter().copied().collect(),
            })
        }
    }

    /// The full oracle transition sequence from the initial configuration.
    pub fn sequence(&self) -> Result<Vec<Transition>, OracleError> {
        let n = self.heads.len() - 1;
        let mut config = Configuration::initial(n);
        let mut out = Vec::new();
        // n shifts, n arcs and at most n(n-1)/2 swaps each followed by a shift
        let limit = n * n + 2 * n + 1;
        while !config.is_terminal() {
            let t = self.next(&config)?;
            config.apply(t).map_err(|_| OracleError::Unreachable {
                stack: config.stack.clone(),
                buffer: config.buffer.iter().copied().collect(),
            })?;
            out.push(t);
            if out.len() > limit {
                return Err(OracleError::Unreachable {
                    stack: config.stack.clone(),
                    buffer: config.buffer.iter().copied().collect(),
                });
            }
        }
        Ok(out)
    }
}

/// Runs the arc-standard oracle without SWAP in surface order. Every
/// subtree that gets completed is projective; the items left on the stack
/// are the MPC roots.
fn maximal_projective_components(heads: &[usize], child_count: &[usize]) -> Vec<usize> {
    let n = heads.len() - 1;
    let mut attached = vec![0usize; n + 1];
    let mut parent: Vec<Option<usize>> = vec![None; n + 1];
    let mut stack = vec![0usize];
    let mut next = 1;
    loop {
        if stack.len() >= 2 {
            let s0 = stack[stack.len() - 1];
            let s1 = stack[stack.len() - 2];
            if s1 != 0 && heads[s1] == s0 && attached[s1] == child_count[s1] {
                stack.remove(stack.len() - 2);
                parent[s1] = Some(s0);
                attached[s0] += 1;
                continue;
            }
            if heads[s0] == s1 && attached[s0] == child_count[s0] {
                stack.pop();
                parent[s0] = Some(s1);
                attached[s1] += 1;
                continue;
            }
        }
        if next <= n {
            stack.push(next);
            next += 1;
        } else {
            break;
        }
    }
    let mut mpc = vec![0; n + 1];
    for (t, slot) in mpc.iter_mut().enumerate() {
        let mut node = t;
        while let Some(p) = parent[node] {
            node = p;
        }
        *slot = node;
    }
    mpc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::is_projective;

    fn fold(n: usize, seq: &[Transition]) -> Configuration {
        let mut c = Configuration::initial(n);
        for &t in seq {
            c.apply(t).unwrap();
        }
        c
    }

    #[test]
    fn projective_tree_needs_no_swap_and_2n_steps() {
        let tree = DepTree::unlabeled(vec![2, 0, 2, 3]);
        let oracle = Oracle::new(&tree, vec![0; 4], SwapStrategy::Lazy);
        let seq = oracle.sequence().unwrap();
        assert_eq!(seq.len(), 8);
        assert!(!seq.contains(&Transition::Swap));
        assert_eq!(fold(4, &seq).heads(), tree.heads);
    }

    #[test]
    fn non_projective_tree_is_reconstructed() {
        let tree = DepTree::unlabeled(vec![3, 4, 0, 3]);
        assert!(!is_projective(&tree));
        let labels = vec![1, 2, 0, 3];
        let oracle = Oracle::new(&tree, labels.clone(), SwapStrategy::Lazy);
        let seq = oracle.sequence().unwrap();
        assert!(seq.contains(&Transition::Swap));
        let c = fold(4, &seq);
        assert!(c.is_terminal());
        assert_eq!(c.heads(), tree.heads);
        assert_eq!(c.label_ids(), labels.into_iter().map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn mpcs_of_projective_tree_are_one_component() {
        let tree = DepTree::unlabeled(vec![2, 0, 2]);
        let oracle = Oracle::new(&tree, vec![0; 3], SwapStrategy::Lazy);
        assert!(oracle.components()[1..].iter().all(|&r| r == 0));
    }

    #[test]
    fn unreachable_configuration_is_reported() {
        let tree = DepTree::unlabeled(vec![0, 1]);
        let oracle = Oracle::new(&tree, vec![0; 2], SwapStrategy::Lazy);
        let mut c = Configuration::initial(2);
        c.apply(Transition::Shift).unwrap();
        c.apply(Transition::Shift).unwrap();
        c.apply(Transition::LeftArc(0)).unwrap();
        // Stack [0, 2], buffer empty; gold wants 2 under 1 which is gone.
        assert!(matches!(oracle.next(&c), Err(OracleError::Unreachable { .. })));
    }
}
