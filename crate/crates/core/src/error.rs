use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("cannot partition {samples} samples over {clients} clients")]
    InfeasiblePartition { clients: usize, samples: usize },

    #[error("numeric overflow on client {client}, round {round}, local step {step}")]
    NumericOverflow { client: usize, round: usize, step: usize },

    #[error("unsupported probe: {0}")]
    UnsupportedProbe(&'static str),

    #[error("probe error: {0}")]
    Probe(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }
}
