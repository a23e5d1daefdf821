use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: need N >= 2")]
    InvalidDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("orthogonal retraction failed: {0}")]
    RetractionFailure(String),
    #[error("unsupported geometry d={d}, L={l}: need d >= 2 and L >= 2")]
    UnsupportedGeometry { d: usize, l: usize },
    #[error("edge {0} does not belong to the lattice")]
    InvalidEdge(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("path is not closed")]
    NotALoop,
    #[error("path is not connected at position {0}")]
    DisconnectedPath(usize),
    #[error("target mismatch: expected {expected}, found {found}")]
    TargetMismatch { expected: String, found: String },
    #[error("invalid couplings: {0}")]
    InvalidCouplings(String),
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),
    #[error("increment norm {norm:.3e} exceeds {limit} on {component}")]
    StepTooLarge {
        component: String,
        norm: f64,
        limit: f64,
    },
    #[error("step {step}: {source}")]
    AtStep { step: usize, source: Box<Error> },
    #[error("finite-difference Hessian unreliable: {0}")]
    HessianCancellation(String),
    #[error("too few samples: {got} < {need}")]
    TooFewSamples { got: usize, need: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),
    #[error("bound unavailable: {0}")]
    BoundUnavailable(String),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error("snapshot format: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
