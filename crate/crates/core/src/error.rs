use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Shape, len: usize },
    #[error("softmax: no unmasked entry")]
    NoUnmaskedEntry,
    #[error("loss is not a scalar: {0:?}")]
    NotScalar(Shape),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("token id {0} outside vocabulary")]
    TokenOutOfRange(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("mask has {got} entries, expected {expected}")]
    MaskLength { got: usize, expected: usize },
    #[error("phrase {0:?} does not begin with the trigger words")]
    MissingTrigger(String),
    #[error("empty phrase")]
    EmptyPhrase,
    #[error("grapheme {0:?} is not in the alphabet")]
    UnknownGrapheme(char),
    #[error("composition is empty: no phrase can be spelled")]
    EmptyComposition,
    #[error("reference is empty; WER is undefined")]
    EmptyReference,
    #[error("embedding row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("bias pool has {available} phrases, {required} required")]
    InsufficientPool { available: usize, required: usize },
    #[error("parameter {0:?} not found")]
    MissingParam(String),
}
