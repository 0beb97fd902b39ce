//! Per-component random streams derived from one experiment seed.
//!
//! Each consumer gets its own ChaCha stream, so adding draws in one
//! component never shifts the numbers another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Component {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Ablation = 4,
    AblationEval = 5,
    Data = 6,
}

/// Stream for `component`; `index` separates sub-streams (e.g. one per
/// sentence or per epoch).
pub fn stream(seed: u64, component: Component, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((component as u64) << 48) ^ index);
    rng
}
