use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("capacity exceeded: {what} needs {needed} but the limit is {limit}")]
    Capacity {
        what: String,
        needed: u64,
        limit: u64,
    },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: u64, limit: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simplex iteration limit of {0} pivots reached")]
    IterationLimit(usize),

    #[error("unexpected LP status {0:?}")]
    LpStatus(crate::simplex::LpStatus),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
