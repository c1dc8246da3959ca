use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller violated an operation's documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// An exhaustive search would exceed its visit budget.
    #[error("search aborted: {needed} triple visits exceed budget {budget}")]
    BudgetExceeded { needed: u128, budget: u128 },

    /// Deterministic quadrature refused a frequency it cannot resolve.
    #[error("quadrature refused: {nodes} nodes per great circle, need {required} for |xi|+|eta| = {freq:.3}")]
    NyquistRefusal { nodes: usize, required: usize, freq: f64 },

    /// Inputs fall outside the region where a bound is stated.
    #[error("outside bound domain: {0}")]
    OutsideDomain(String),

    /// A Monte Carlo stratum received too little weight to be estimated.
    #[error("stratum underflow: {0}")]
    StratumUnderflow(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
