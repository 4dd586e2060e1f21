use std::path::{Path, PathBuf};

use smokestep_tensor::CheckpointError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("incompatible grids: {left:?} vs {right:?}")]
    IncompatibleGrids { left: Vec<usize>, right: Vec<usize> },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("{0}")]
    Dimension(String),
    #[error("simulation diverged at frame {frame}: {what}")]
    Diverged { frame: usize, what: String },
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad file {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing cached large-step result for pair n = {n}")]
    MissingLargeStep { n: usize },
    #[error("state index {index} out of range (archive holds 0..={max})")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("degenerate normalizer: {0}")]
    Degenerate(String),
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("invalid argument: {0}")]
    Argument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Error {
        Error::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}
