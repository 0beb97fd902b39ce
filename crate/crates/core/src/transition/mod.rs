//! Transition-based parsing with arc-standard and SWAP.

mod features;
mod oracle;
mod parser;
mod system;

pub use features::{Anchor, FeatureSet, Slot, SlotParseError};
pub use oracle::{Oracle, OracleError, SwapStrategy};
pub use parser::{TransitionConfig, TransitionParser};
pub use system::{Configuration, IllegalTransition, Transition};
