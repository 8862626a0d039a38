use thiserror::Error;

use crate::msg::TypeTag;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("command rejected: {0}")]
    CommandRejected(String),

    #[error("world file syntax error at line {line}, column {column}: {message}")]
    WorldSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("world file semantic error: {0}")]
    WorldSemantic(String),

    #[error("topic `{topic}` is {existing:?}, cannot use it as {requested:?}")]
    TopicTypeConflict {
        topic: String,
        existing: TypeTag,
        requested: TypeTag,
    },

    #[error("malformed topic name or pattern `{0}`")]
    BadTopic(String),

    #[error("unknown vehicle `{0}`")]
    UnknownVehicle(String),

    #[error("vehicle `{0}` already exists")]
    DuplicateVehicle(String),

    #[error("controller fault on `{vehicle}`: {message}")]
    ControllerFault { vehicle: String, message: String },

    #[error(transparent)]
    Bag(#[from] crate::bag::BagError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
