use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("requested {requested} examples but only {available} are available")]
    NotEnoughExamples { requested: usize, available: usize },

    #[error("span ({start},{end}) is out of bounds for chunk {chunk} with {len} tokens")]
    SpanOutOfBounds {
        chunk: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("feature schema mismatch: model uses `{found}`, featurizer is `{expected}`")]
    SchemaMismatch { expected: String, found: String },

    #[error("training set has no usable examples")]
    EmptyTrainingSet,

    #[error("example `{0}` has no candidate spans")]
    NoCandidates(String),

    #[error("prediction for unknown id `{0}`")]
    UnknownId(String),

    #[error("gold answer list is empty")]
    EmptyGolds,

    #[error("duplicate cell ({from}, {to})")]
    DuplicateCell { from: String, to: String },

    #[error("missing value: {0}")]
    MissingValue(String),
}
