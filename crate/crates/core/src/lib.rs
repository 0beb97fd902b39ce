//! BiLSTM dependency parsers (transition-based and graph-based) together
//! with tools that measure how much structural context the encoder captures:
//! derivative-based impact scores and token-exclusion ablations.

pub mod ablation;
pub mod autodiff;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod impact;
pub mod mlp;
pub mod model_file;
pub mod rng;
pub mod synth;
pub mod training;
pub mod transition;
pub mod treebank;

pub use error::{Error, Result};
