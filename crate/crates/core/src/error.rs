use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("unsupported BGEN feature: {0}")]
    UnsupportedBgen(String),

    #[error("duplicate sample ID '{id}' in {context}")]
    DuplicateSample { id: String, context: String },

    #[error("sample alignment: {0}")]
    Alignment(String),

    #[error("phenotype: {0}")]
    Phenotype(String),

    #[error("covariate: {0}")]
    Covariate(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("concordance: {0}")]
    Concordance(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
