use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::encoder::EncoderError;
use crate::transition::OracleError;
use crate::treebank::TreebankError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("undefined impact: {0}")]
    UndefinedImpact(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Treebank(#[from] TreebankError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
