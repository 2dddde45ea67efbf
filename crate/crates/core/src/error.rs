use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum TtaError {
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("empty score vector")]
    EmptyVector,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown transform `{0}`")]
    UnknownTransform(String),
    #[error("bad parameter for transform `{name}`: {detail}")]
    BadTransformParam { name: String, detail: String },
    #[error("invalid crop size {crop} for source side {source_side}")]
    InvalidCropSize { crop: u32, source_side: u32 },
    #[error("geometry error: {0}")]
    GeometryError(String),
    #[error("malformed policy manifest at line {line}: {detail}")]
    BadManifest { line: usize, detail: String },

    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("empty GPS selection pool")]
    EmptySelectionPool,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance in paired differences")]
    DegenerateVariance,
    #[error("subsample would be empty")]
    EmptySubsample,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported weight mode byte {0}")]
    UnsupportedMode(u8),
    #[error("truncated file: needed {needed} bytes, have {have}")]
    TruncatedFile { needed: usize, have: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u64, classes: u64 },
    #[error("negative weight {0}")]
    NegativeWeight(f32),
    #[error("empty set")]
    EmptySet,

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("increments must be ascending within [0, 1]")]
    NonMonotoneIncrements,

    #[error("image error: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TtaError {
    /// True for errors raised while decoding one of the binary interchange formats.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            TtaError::BadMagic { .. }
                | TtaError::UnsupportedVersion(_)
                | TtaError::UnsupportedMode(_)
                | TtaError::TruncatedFile { .. }
                | TtaError::LabelOutOfRange { .. }
                | TtaError::NegativeWeight(_)
                | TtaError::EmptySet
                | TtaError::InvariantViolation(_)
                | TtaError::NonFiniteInput
                | TtaError::BadManifest { .. }
                | TtaError::Image(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, TtaError>;
