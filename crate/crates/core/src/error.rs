use alloc::string::String;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),
    #[error("ambiguous attribute `{0}`")]
    AmbiguousAttribute(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("relation `{0}` is accessed more than once")]
    RepeatedAccess(String),
    #[error("unbound parameter ${0}")]
    UnboundParameter(usize),
    #[error("binding error: {0}")]
    Binding(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("sketch error: {0}")]
    Sketch(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;
