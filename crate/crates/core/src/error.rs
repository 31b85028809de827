use alloc::string::String;

/// Errors raised by the engine and its building blocks.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(&'static str),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("frame has no valid depth pixel")]
    EmptyFrame,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("instance feature row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("weight cache row has no live entry")]
    EmptySemantics,
    #[error("codebook index {0} does not exist")]
    DanglingIndex(u32),
    #[error("frame step {got} does not follow step {previous}")]
    Ordering { previous: u64, got: u64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
