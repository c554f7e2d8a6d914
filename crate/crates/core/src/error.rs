use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("unknown symbol {symbol:?} for feature {feature:?}")]
    UnknownSymbol { feature: String, symbol: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("refusing to write into non-empty directory {path} (pass --force to overwrite)")]
    OutputExists { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv { path: path.into(), source }
    }
}
