//! Configuration positions used as features, impact buckets and ablation
//! targets.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use super::system::Configuration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Anchor {
    Stack(usize),
    Buffer(usize),
}

impl Anchor {
    pub fn token(self, config: &Configuration) -> Option<usize> {
        match self {
            Anchor::Stack(i) => config.stack_item(i),
            Anchor::Buffer(i) => config.buffer_item(i),
        }
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Anchor::Stack(i) => write!(f, "s{i}"),
            Anchor::Buffer(i) => write!(f, "b{i}"),
        }
    }
}

/// A position in a configuration. `InnerLeft`/`InnerRight` are the left
/// (right) children that are not the leftmost (rightmost) one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    Item(Anchor),
    Leftmost(Anchor),
    Rightmost(Anchor),
    InnerLeft(Anchor),
    InnerRight(Anchor),
}

impl Slot {
    /// True when the slot always names at most one token.
    pub fn is_unique(self) -> bool {
        !matches!(self, Slot::InnerLeft(_) | Slot::InnerRight(_))
    }

    /// All tokens occupying the slot (root included for stack items).
    pub fn tokens(self, config: &Configuration) -> Vec<usize> {
        let anchor = |a: Anchor| a.token(config);
        match self {
            Slot::Item(a) => anchor(a).into_iter().collect(),
            Slot::Leftmost(a) => anchor(a)
                .and_then(|t| config.leftmost_left_child(t))
                .into_iter()
                .collect(),
            Slot::Rightmost(a) => anchor(a)
                .and_then(|t| config.rightmost_right_child(t))
                .into_iter()
                .collect(),
            Slot::InnerLeft(a) => anchor(a)
                .map(|t| config.left_children(t).skip(1).collect())
                .unwrap_or_default(),
            Slot::InnerRight(a) => anchor(a)
                .map(|t| {
                    let mut r: Vec<usize> = config.right_children(t).collect();
                    r.pop();
                    r
                })
                .unwrap_or_default(),
        }
    }

    /// The token in a unique slot.
    pub fn resolve(self, config: &Configuration) -> Option<usize> {
        self.tokens(config).first().copied()
    }

    /// A uniformly random occupant, if any.
    pub fn choose<R: Rng>(self, config: &Configuration, rng: &mut R) -> Option<usize> {
        let tokens = self.tokens(config);
        match tokens.len() {
            0 => None,
            1 => Some(tokens[0]),
            _ => tokens.choose(rng).copied(),
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slot::Item(a) => write!(f, "{a}"),
            Slot::Leftmost(a) => write!(f, "{a}L"),
            Slot::Rightmost(a) => write!(f, "{a}R"),
            Slot::InnerLeft(a) => write!(f, "{a}Lbar"),
            Slot::InnerRight(a) => write!(f, "{a}Rbar"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotParseError(pub String);

impl fmt::Display for SlotParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid position '{}'", self.0)
    }
}

impl std::error::Error for SlotParseError {}

impl FromStr for Slot {
    type Err = SlotParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || SlotParseError(s.to_string());
        let mut chars = s.chars();
        let kind = chars.next().ok_or_else(err)?;
        let rest: String = chars.collect();
        let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
        let suffix = &rest[digits.len()..];
        let index: usize = digits.parse().map_err(|_| err())?;
        if index > 2 {
            return Err(err());
        }
        let anchor = match kind {
            's' => Anchor::Stack(index),
            'b' => Anchor::Buffer(index),
            _ => return Err(err()),
        };
        let slot = match suffix {
            "" => Slot::Item(anchor),
            "L" => Slot::Leftmost(anchor),
            "R" => Slot::Rightmost(anchor),
            "Lbar" => Slot::InnerLeft(anchor),
            "Rbar" => Slot::InnerRight(anchor),
            _ => return Err(err()),
        };
        Ok(slot)
    }
}

/// Ordered feature positions; each resolves to one vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureSet(pub Vec<Slot>);

impl FeatureSet {
    /// `{s0, s1, b0}`.
    pub fn simple() -> Self {
        FeatureSet::from_str("s0,s1,b0").expect("valid")
    }

    /// `{s0, s1, s2, b0, s0L, s0R, s1L, s1R, s2L, s2R, b0L}`.
    pub fn extended() -> Self {
        FeatureSet::from_str("s0,s1,s2,b0,s0L,s0R,s1L,s1R,s2L,s2R,b0L").expect("valid")
    }

    /// Incremental feature sets from `{s0}` up to the extended set.
    pub fn ladder() -> Vec<FeatureSet> {
        let order = ["s0", "s1", "b0", "s0L", "s1R", "s0R", "s1L", "s2", "s2L", "s2R", "b0L"];
        (1..=order.len())
            .map(|k| FeatureSet::from_str(&order[..k].join(",")).expect("valid"))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Token behind every feature slot (`None` when unoccupied).
    pub fn resolve(&self, config: &Configuration) -> Vec<Option<usize>> {
        self.0.iter().map(|s| s.resolve(config)).collect()
    }
}

impl FromStr for FeatureSet {
    type Err = SlotParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut slots = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let slot: Slot = part.parse()?;
            if !slot.is_unique() || slots.contains(&slot) {
                return Err(SlotParseError(part.to_string()));
            }
            slots.push(slot);
        }
        if slots.is_empty() {
            return Err(SlotParseError(s.to_string()));
        }
        Ok(FeatureSet(slots))
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(Slot::to_string).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::system::Transition;

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["s0", "b1", "s2L", "s0R", "s1Lbar", "s0Rbar", "b0L"] {
            assert_eq!(s.parse::<Slot>().unwrap().to_string(), s);
        }
        assert_eq!(FeatureSet::extended().len(), 11);
        assert_eq!(FeatureSet::simple().to_string(), "s0,s1,b0");
    }

    #[test]
    fn invalid_tokens_are_named() {
        assert_eq!("s0,x9,b0".parse::<FeatureSet>(), Err(SlotParseError("x9".into())));
        assert_eq!("s0Lbar".parse::<FeatureSet>(), Err(SlotParseError("s0Lbar".into())));
        assert!("s7".parse::<Slot>().is_err());
    }

    #[test]
    fn ladder_ends_with_extended_set() {
        let ladder = FeatureSet::ladder();
        assert_eq!(ladder.len(), 11);
        assert_eq!(ladder[0].to_string(), "s0");
        let mut last = ladder.last().unwrap().0.clone();
        let mut ext = FeatureSet::extended().0;
        last.sort();
        ext.sort();
        assert_eq!(last, ext);
    }

    #[test]
    fn child_slots() {
        // Build s0 = 6 with left children 2, 5 (and 4) and right child 7.
        let mut c = Configuration::initial(7);
        for _ in 0..6 {
            c.apply(Transition::Shift).unwrap();
        }
        // stack [0,1,2,3,4,5,6]
        c.apply(Transition::LeftArc(0)).unwrap(); // 6 -> 5
        c.apply(Transition::LeftArc(0)).unwrap(); // 6 -> 4
        c.apply(Transition::Swap).unwrap(); // 3 back to buffer
        c.apply(Transition::LeftArc(0)).unwrap(); // 6 -> 2
        assert_eq!(c.stack, vec![0, 1, 6]);
        let s0 = Anchor::Stack(0);
        assert_eq!(Slot::Leftmost(s0).resolve(&c), Some(2));
        assert_eq!(Slot::InnerLeft(s0).tokens(&c), vec![4, 5]);
        assert_eq!(Slot::Rightmost(s0).resolve(&c), None);
        // b0 = 3 has no children
        assert_eq!(Slot::Leftmost(Anchor::Buffer(0)).resolve(&c), None);
        assert_eq!(Slot::Item(Anchor::Stack(2)).resolve(&c), Some(0));
        assert_eq!(Slot::Item(Anchor::Stack(3)).resolve(&c), None);
    }
}
