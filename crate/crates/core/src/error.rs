use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("flight {0}: timestamps are not strictly increasing")]
    NonMonotonicTimestamps(String),
    #[error("flight {flight}: {reason}")]
    InvalidTrajectory { flight: String, reason: String },
    #[error("first and last timestamps coincide")]
    DegenerateDuration,
    #[error("split ratios must be positive and sum to 1")]
    RatioSumInvalid,
    #[error("empty input set")]
    EmptySet,
    #[error("label {0:?} is not in the vocabulary")]
    UnknownLabel(String),
    #[error("token code {0} is outside the vocabulary")]
    UnknownToken(usize),
    #[error("invalid toy airport spec: {0}")]
    InvalidSpec(String),
    #[error("channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("latitude exceeds 89 degrees at step {0}")]
    PoleProximity(usize),
    #[error("smoothing factor {0} outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("kinematic trajectory has no anchor")]
    MissingAnchor,
    #[error("embedding dimension {0} is odd")]
    OddDim(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid schedule range")]
    InvalidRange,
    #[error("diffusion step {0} outside 1..=T")]
    StepOutOfRange(usize),
    #[error("substep count {0} outside 1..=T")]
    SubstepRange(usize),
    #[error("training data has not been standardized")]
    UnfittedScaler,
    #[error("model family mismatch: expected {expected}, found {found}")]
    FamilyMismatch { expected: String, found: String },
    #[error("non-finite loss at epoch {0}")]
    NumericFailure(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty path")]
    EmptyPath,
    #[error("degenerate bounding box")]
    DegenerateBBox,
    #[error("histogram grids differ")]
    GridMismatch,
    #[error("need at least two observations per sample, found {0}")]
    TooFewSamples(usize),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
