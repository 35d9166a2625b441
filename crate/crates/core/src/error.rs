use thiserror::Error;

use crate::arith::ArithError;
use crate::kneading::KneadError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Arith(#[from] ArithError),
    #[error(transparent)]
    Knead(#[from] KneadError),
    #[error("unresolved: {what} (index {index})")]
    Unresolved { what: String, index: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
    #[error("no recurrence witness within horizon {0}")]
    NoRecurrenceWitness(usize),
    #[error("chain condition violated at level {0}")]
    ConditionViolated(usize),
    #[error("construction stuck at {stage}: {dump}")]
    ConstructionStuck { stage: String, dump: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn unresolved(what: impl Into<String>, index: usize) -> Error {
        Error::Unresolved { what: what.into(), index }
    }

    pub fn is_precision(&self) -> bool {
        matches!(
            self,
            Error::Unresolved { .. }
                | Error::Arith(ArithError::PrecisionExhausted { .. })
                | Error::Knead(KneadError::Arith(ArithError::PrecisionExhausted { .. }))
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
