use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("illegal tag `{0}`")]
    IllegalTag(String),
    #[error("invalid {scheme} sequence at position {position}")]
    InvalidScheme { scheme: &'static str, position: usize },
    #[error("mentions overlap: {0}")]
    Overlap(String),
    #[error("span {start}..={end} is out of bounds for length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("invalid token `{0}`: tokens must be non-empty and contain no whitespace")]
    InvalidToken(String),
    #[error("sentence `{0}` has no tokens")]
    EmptySentence(String),
    #[error("vocabulary size {size} is below the minimum of {minimum}")]
    VocabTooSmall { size: usize, minimum: usize },
    #[error("malformed vocabulary: {0}")]
    Vocab(String),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("target {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("dice smoothing must be positive, got {0}")]
    InvalidGamma(f64),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("training diverged: loss is {0}")]
    Diverged(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("question needs {needed} positions but max sequence length is {max}")]
    QuestionTooLong { needed: usize, max: usize },
    #[error("incompatible models: {0}")]
    Incompatible(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}
