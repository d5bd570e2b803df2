use std::io;
use std::path::{Path, PathBuf};

use tcs_core::corpus::CorpusError;
use tcs_core::format::ParseError;
use tcs_core::lm::LmError;
use tcs_core::ngram::NgramError;
use tcs_core::sampler::SamplerError;
use tcs_core::similarity::SimilarityError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
}

impl CliError {
    /// 1 for validation problems, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Parse { .. } => 1,
            CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn parse(path: &Path, source: ParseError) -> Self {
        CliError::Parse {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(err: CorpusError) -> Self {
        match err {
            CorpusError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Validation(err.to_string())
            }
        })*
    };
}

validation_from!(NgramError, LmError, SimilarityError, SamplerError);
