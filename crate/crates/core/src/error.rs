use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the ring algebra, search, convolution and fixed-point code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("indexing tensor entry M[{i}][{k}][{j}] = {value} is not in {{-1, 0, 1}}")]
    InvalidEntry { i: usize, k: usize, j: usize, value: i64 },

    #[error("sub-product (k={k}, j={j}) is distributed to {outputs} output components")]
    NotExclusive { k: usize, j: usize, outputs: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("basis matrices E_k do not commute; no simultaneous diagonalization exists")]
    NotSimultaneouslyDiagonalizable,

    #[error("generic isomorphic matrix has complex eigenvalues; not diagonalizable over the reals")]
    NotRealDiagonalizable,

    #[error("generic isomorphic matrix has repeated eigenvalues after {attempts} probes")]
    DegenerateSpectrum { attempts: usize },

    #[error("ring {0} has no fast algorithm")]
    MissingFastAlgorithm(String),

    #[error("fast algorithm does not reproduce the indexing tensor (max deviation {deviation:e})")]
    DecompositionMismatch { deviation: f64 },

    #[error("no CP fit up to rank {r_max}; best residual per rank: {best_residuals:?}")]
    Unresolved { r_max: usize, best_residuals: Vec<(usize, f64)> },

    #[error("accumulator overflow in layer {layer}")]
    AccumulatorOverflow { layer: usize },

    #[error("{what} needs {bits} bits, declared width is {limit}")]
    WidthViolation { what: &'static str, bits: u32, limit: u32 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("calibration set is empty")]
    EmptyCalibration,

    #[error("fixed-point inference requires a Q-format plan")]
    MissingPlan,

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("{channels} real channels are not divisible by ring dimension {n}")]
    NonDivisibleChannels { channels: usize, n: usize },

    #[error("ring-form and matrix-form gradients disagree by {deviation:e}")]
    GradientMismatch { deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, RingError>;
