use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] wastive_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("transport: {0}")]
    Transport(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
