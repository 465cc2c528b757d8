use alloc::string::String;

/// Errors raised by the numerical core.
#[allow(missing_docs)]
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duplicate resampling index {0}")]
    DuplicateIndex(usize),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("mismatched grids")]
    MismatchedGrids,
    #[error("non-finite value {value} at support point {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("signed measure where a probability measure is required")]
    SignedMeasure,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("incompatible model and measure: {0}")]
    Incompatible(String),
    #[error("all grid nodes underflow in the Gibbs map")]
    Underflow,
    #[error("fixed point not reached after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular system (condition estimate {condition:e})")]
    Singular { condition: f64 },
    #[error("Langevin particles diverged at step {step}")]
    Diverged { step: usize },
    #[error("KL divergence is infinite")]
    InfiniteKl,
    #[error("enumeration of {terms} terms exceeds the limit")]
    EnumerationTooLarge { terms: f64 },
    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("rate fit needs at least 3 usable points, got {0}")]
    TooFewPoints(usize),
}

/// Result alias for this crate.
pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: &str) -> Error {
    Error::InvalidArgument(String::from(msg))
}
