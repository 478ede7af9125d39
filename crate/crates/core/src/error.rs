use std::path::PathBuf;

/// Errors produced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A point fell outside the volume it was voxelized into.
    #[error("point {index} at ({x}, {y}, {z}) lies outside the volume bounds")]
    OutOfBounds { index: usize, x: f64, y: f64, z: f64 },

    /// Two structures that must agree (a map and a tensor, two volumes) do not.
    #[error("structural mismatch: {0}")]
    Structure(String),

    /// Malformed bytes or text in one of the on-disk formats.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A loss or activation became NaN or infinite.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
