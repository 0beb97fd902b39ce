//! Arc-standard with SWAP.

use std::collections::VecDeque;
use std::fmt;

/// A transition. Arc transitions carry a label id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Transition {
    Shift,
    Swap,
    LeftArc(usize),
    RightArc(usize),
}

impl Transition {
    /// Number of transitions for a label inventory: SHIFT, SWAP and one
    /// LEFT-ARC and RIGHT-ARC per label.
    pub fn inventory_size(num_labels: usize) -> usize {
        2 + 2 * num_labels
    }

    pub fn id(self, num_labels: usize) -> usize {
        match self {
            Transition::Shift => 0,
            Transition::Swap => 1,
            Transition::LeftArc(l) => 2 + l,
            Transition::RightArc(l) => 2 + num_labels + l,
        }
    }

    pub fn from_id(id: usize, num_labels: usize) -> Transition {
        match id {
            0 => Transition::Shift,
            1 => Transition::Swap,
            i if i < 2 + num_labels => Transition::LeftArc(i - 2),
            i => Transition::RightArc(i - 2 - num_labels),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transition::Shift => write!(f, "SHIFT"),
            Transition::Swap => write!(f, "SWAP"),
            Transition::LeftArc(l) => write!(f, "LEFT-ARC({l})"),
            Transition::RightArc(l) => write!(f, "RIGHT-ARC({l})"),
        }
    }
}

/// Parser state: stack (top is the last element, root 0 at the bottom),
/// buffer (front is `b0`) and the arcs built so far.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub stack: Vec<usize>,
    pub buffer: VecDeque<usize>,
    heads: Vec<Option<usize>>,
    labels: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IllegalTransition(pub Transition);

impl fmt::Display for IllegalTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "illegal transition {}", self.0)
    }
}

impl std::error::Error for IllegalTransition {}

impl Configuration {
    /// Initial configuration for `n` tokens: everything in the buffer.
    pub fn initial(n: usize) -> Self {
        Configuration {
            stack: vec![0],
            buffer: (1..=n).collect(),
            heads: vec![None; n + 1],
            labels: vec![None; n + 1],
            children: vec![Vec::new(); n + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_terminal(&self) -> bool {
        self.buffer.is_empty() && self.stack.len() == 1
    }

    /// `i`-th item from the top of the stack.
    pub fn stack_item(&self, i: usize) -> Option<usize> {
        self.stack.len().checked_sub(i + 1).map(|p| self.stack[p])
    }

    pub fn buffer_item(&self, i: usize) -> Option<usize> {
        self.buffer.get(i).copied()
    }

    pub fn head(&self, token: usize) -> Option<usize> {
        self.heads[token]
    }

    pub fn label(&self, token: usize) -> Option<usize> {
        self.labels[token]
    }

    /// Attached dependents of `token` in surface order.
    pub fn children(&self, token: usize) -> &[usize] {
        &self.children[token]
    }

    pub fn left_children(&self, token: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[token].iter().copied().filter(move |&c| c < token)
    }

    pub fn right_children(&self, token: usize) -> impl Iterator<Item = usize> + '_ {
        self.children[token].iter().copied().filter(move |&c| c > token)
    }

    pub fn leftmost_left_child(&self, token: usize) -> Option<usize> {
        self.left_children(token).next()
    }

    pub fn rightmost_right_child(&self, token: usize) -> Option<usize> {
        self.right_children(token).last()
    }

    pub fn can_shift(&self) -> bool {
        !self.buffer.is_empty()
    }

    /// Arcs need two stack items; the dependent may never be the root.
    pub fn can_left_arc(&self) -> bool {
        self.stack.len() >= 2 && self.stack_item(1) != Some(0)
    }

    pub fn can_right_arc(&self) -> bool {
        self.stack.len() >= 2 && self.stack_item(0) != Some(0)
    }

    /// SWAP requires `0 < s1 < s0` in the original order.
    pub fn can_swap(&self) -> bool {
        match (self.stack_item(1), self.stack_item(0)) {
            (Some(s1), Some(s0)) => 0 < s1 && s1 < s0,
            _ => false,
        }
    }

    pub fn is_legal(&self, t: Transition) -> bool {
        match t {
            Transition::Shift => self.can_shift(),
            Transition::Swap => self.can_swap(),
            Transition::LeftArc(_) => self.can_left_arc(),
            Transition::RightArc(_) => self.can_right_arc(),
        }
    }

    /// Legality mask over the transition inventory, indexed by transition id.
    pub fn legal_mask(&self, num_labels: usize) -> Vec<bool> {
        let mut mask = vec![false; Transition::inventory_size(num_labels)];
        mask[0] = self.can_shift();
        mask[1] = self.can_swap();
        let left = self.can_left_arc();
        let right = self.can_right_arc();
        for l in 0..num_labels {
            mask[2 + l] = left;
            mask[2 + num_labels + l] = right;
        }
        mask
    }

    pub fn apply(&mut self, t: Transition) -> Result<(), IllegalTransition> {
        if !self.is_legal(t) {
            return Err(IllegalTransition(t));
        }
        match t {
            Transition::Shift => {
                let b0 = self.buffer.pop_front().expect("legal shift");
                self.stack.push(b0);
            }
            Transition::Swap => {
                let s0 = self.stack.pop().expect("legal swap");
                let s1 = self.stack.pop().expect("legal swap");
                self.stack.push(s0);
                self.buffer.push_front(s1);
            }
            Transition::LeftArc(l) => {
                let s0 = self.stack.pop().expect("legal arc");
                let s1 = self.stack.pop().expect("legal arc");
                self.attach(s0, s1, l);
                self.stack.push(s0);
            }
            Transition::RightArc(l) => {
                let s0 = self.stack.pop().expect("legal arc");
                let s1 = *self.stack.last().expect("legal arc");
                self.attach(s1, s0, l);
            }
        }
        Ok(())
    }

    fn attach(&mut self, head: usize, dependent: usize, label: usize) {
        debug_assert!(self.heads[dependent].is_none());
        self.heads[dependent] = Some(head);
        self.labels[dependent] = Some(label);
        let kids = &mut self.children[head];
        let pos = kids.partition_point(|&c| c < dependent);
        kids.insert(pos, dependent);
    }

    /// Heads of tokens `1..=n`; unattached tokens go to the root.
    pub fn heads(&self) -> Vec<usize> {
        self.heads[1..].iter().map(|h| h.unwrap_or(0)).collect()
    }

    pub fn label_ids(&self) -> Vec<Option<usize>> {
        self.labels[1..].to_vec()
    }
}
