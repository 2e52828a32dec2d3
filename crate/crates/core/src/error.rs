use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op} expects a {expected} tensor, got {got}")]
    DtypeMismatch {
        op: &'static str,
        expected: &'static str,
        got: &'static str,
    },

    #[error("bad magic in {path}: expected \"GFT1\"")]
    BadMagic { path: PathBuf },

    #[error("unknown dtype code {code} in {path}")]
    BadDtypeCode { code: u8, path: PathBuf },

    #[error("truncated payload in {path}: expected {expected} more bytes")]
    Truncated { path: PathBuf, expected: u64 },

    #[error("extent overflow in {path}: {detail}")]
    ExtentOverflow { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("loss must be a real scalar, got {dtype} tensor of shape {shape:?}")]
    NonScalarLoss { dtype: &'static str, shape: Vec<usize> },

    #[error("backward called twice on the same tape without reset")]
    BackwardConsumed,

    #[error("non-finite value produced by op `{op}`")]
    NonFinite { op: &'static str },

    #[error("solver blow-up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("mixed groups: {0} vs {1}")]
    MixedGroups(&'static str, &'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
