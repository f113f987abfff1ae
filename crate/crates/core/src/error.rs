use thiserror::Error;

/// Errors raised by the extension library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty reference set")]
    EmptyReferenceSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("order exceeded: requested {requested}, available {available}")]
    OrderExceeded { requested: usize, available: usize },

    #[error("witness not bracketed: {0}")]
    WitnessNotBracketed(String),

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("site {0:?} is not a dyadic rational representable on the fixed grid")]
    NonDyadicSite(Vec<f64>),

    #[error("point lies on the closed set")]
    OnClosedSet,

    #[error("unresolvable at depth cap {cap}: {diagnostics}")]
    DepthCap { cap: i32, diagnostics: String },

    #[error("outside computational domain")]
    OutsideDomain,

    #[error("missing jet for site {0:?}")]
    MissingJet(Vec<f64>),

    #[error("decay violated: {0}")]
    DecayViolated(String),

    #[error("diagonal not integrable: {0}")]
    DiagonalNotIntegrable(String),

    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    #[error("arithmetic overflow in exact predicate")]
    Overflow,

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
