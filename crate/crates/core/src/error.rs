use std::path::PathBuf;

use crate::tdoa_ekf::AnchorPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("position within 1e-6 m of anchor {anchor}")]
    Singularity { anchor: u32 },

    #[error("filter diverged while processing pair {pair}")]
    FilterDivergence { pair: AnchorPair },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("no fixes inside the evaluation band of door {door}")]
    ZeroEvidence { door: u32 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("map generation failed: {0}")]
    Generation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. }
                | Error::FilterDivergence { .. }
                | Error::Initialization(_)
                | Error::ZeroEvidence { .. }
                | Error::Calibration(_)
        )
    }
}
