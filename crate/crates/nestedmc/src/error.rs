//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by model construction, estimation, and the experiment
/// harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A model, contract, or request parameter lies outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A time grid could not place the requested horizons exactly on steps.
    #[error("time grid misaligned: {0}")]
    GridMisaligned(String),

    /// The target measure puts mass where the reference measure has none, so
    /// no finite likelihood ratio exists for the offending input.
    #[error("support mismatch between target and reference: {0}")]
    SupportMismatch(String),

    /// An equidistant-partition bin contains no reference samples, leaving
    /// the ratio undefined there.
    #[error("empty reference bin {bin} of {total}")]
    EmptyReferenceBin { bin: usize, total: usize },

    /// A tail expectation was requested but no losses lie above the quantile.
    #[error("degenerate tail: {0}")]
    DegenerateTail(String),

    /// The regression design matrix is rank-deficient.
    #[error("singular regression fit: {0}")]
    SingularFit(String),

    /// Adaptive quadrature exhausted its subdivision budget before reaching
    /// the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    QuadratureTolerance(String),

    /// An experiment configuration is internally inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// I/O failure from the oracle cache or report output.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
