use alloc::string::String;

/// Contract violations and shape errors raised by the core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("incomplete trajectory")]
    IncompleteTrajectory,
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("operation not valid for this communication mode: {0}")]
    Mode(&'static str),
    #[error("cells are not connected")]
    Unreachable,
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
