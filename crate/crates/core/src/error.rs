use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("index {index} out of range (limit {limit}) in {what}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("non-finite gradient in parameter `{param}`")]
    NonFiniteGradient { param: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("finite-difference oracle produced a non-finite value at coordinate {coord}")]
    Oracle { coord: usize },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("sequence too short: {len} frames, need at least {min}")]
    SequenceTooShort { len: usize, min: usize },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error("sequence {seq} contains the geometry token but no geometry feature was supplied")]
    Injection { seq: usize },
    #[error("sequence length {len} exceeds the maximum {max}")]
    Length { len: usize, max: usize },
    #[error("loss mask selects no positions")]
    DegenerateBatch,
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("malformed generation ({reason}): {tokens:?}")]
    Generation { reason: String, tokens: Vec<usize> },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unknown adapter target `{0}`")]
    UnknownTarget(String),
    #[error("duplicate word `{0}` in vocabulary")]
    DuplicateWord(String),
}
