use thiserror::Error;

/// Errors shared across the solver, kernel and verification modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported domain: dimension {0} (only 1 and 2 are implemented)")]
    UnsupportedDomain(usize),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("fields belong to different eigenbases")]
    BasisMismatch,

    #[error("mode index {index:?} exceeds the grid resolution ({limit} interior nodes per side)")]
    AliasedMode { index: [usize; 2], limit: usize },

    #[error("exponent q = {q} outside the admissible range (0, {limit}) for N = {n}, s = {s}")]
    QOutOfRange { q: f64, limit: f64, n: usize, s: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("inner fixed point failed to converge after {iterations} iterations (last update {last_update:e})")]
    InnerNonConvergence { iterations: usize, last_update: f64 },

    #[error("time step underflow: dt = {dt:e} below minimum {min:e}")]
    DtUnderflow { dt: f64, min: f64 },

    #[error("cumulative clipped mass {clipped:e} exceeds {limit:e} of the initial mass")]
    ExcessiveClipping { clipped: f64, limit: f64 },

    #[error("inapplicable: {0}")]
    Inapplicable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
