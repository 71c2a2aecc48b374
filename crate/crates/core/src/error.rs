use thiserror::Error;

/// Errors raised by models, kernels and the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An observed energy difference exceeded its declared bound `c_i * M(θ, θ')`.
    #[error("bound violation at datum {index}: |ΔU| / (c_i·M) = {ratio}")]
    BoundViolation { index: usize, ratio: f64 },

    #[error("state lies outside the model support")]
    OutOfSupport,

    /// A Poisson rate in the reference auxiliary-variable kernel came out negative.
    #[error("negative Poisson rate {rate} for datum {index}")]
    NegativeRate { index: usize, rate: f64 },

    /// A PoissonMH factor left its declared global range `[0, M_i]`.
    #[error("factor {index} = {value} outside global bound [0, {bound}]")]
    GlobalBoundViolation { index: usize, value: f64, bound: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("pilot run rejected every proposal")]
    DegeneratePilot,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("fewer than {wanted} positive eigenvalues (found {found})")]
    RankDeficiency { wanted: usize, found: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("no samples fall inside the grid bounds")]
    EmptyBox,

    #[error("diagonal entry {index} = {value} below -3 SE ({se})")]
    NegativeDiagonal { index: usize, value: f64, se: f64 },

    #[error("detailed-balance residual {residual} exceeds {limit} at ({from}, {to})")]
    NonReversible { from: usize, to: usize, residual: f64, limit: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("expected {expected} examples, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
