use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// The bound is infinite because `r = exp(-k eps gamma) (1 - gamma)^-2 >= 1`.
    #[error("infeasible bound parameters: r = {r} is not below 1")]
    Infeasible { r: f64 },

    /// A stream coin ran out of tokens before the run finished.
    #[error("coin stream exhausted after {flips_used} flips")]
    InputExhausted { flips_used: u64 },

    #[error("invalid byte {byte:#04x} at offset {offset} in coin stream")]
    StreamFormat { byte: u8, offset: u64 },

    /// A safety guard tripped; the input is probably degenerate (p at 0 or 1).
    #[error("non-termination suspected: {what} exceeded {limit}")]
    NonTermination { what: &'static str, limit: u64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
