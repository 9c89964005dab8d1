use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("payload size mismatch: header declares {expected} voxels, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("too few points: need at least {needed}, found {found}")]
    TooFewPoints { needed: usize, found: usize },

    #[error("singular evaluation: point within {distance:e} of control point {index}")]
    Singularity { index: usize, distance: f64 },

    #[error("the level set f = 1 is empty on the sampling grid")]
    EmptySurface,

    #[error("mesh is not closed: {0} boundary edges")]
    OpenMesh(usize),

    #[error("degenerate point set: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. }
                | Error::EmptySurface
                | Error::OpenMesh(_)
                | Error::Degenerate(_)
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
