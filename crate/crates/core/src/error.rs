use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Input problems (malformed files, inconsistent hypotheses) are kept apart
/// from numerical failures so callers can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid allele designation `{0}`")]
    InvalidAllele(String),

    #[error("invalid frequency table: {0}")]
    InvalidFrequencyTable(String),

    #[error("marker `{marker}` is not present in population `{population}`")]
    UnknownMarker { marker: String, population: String },

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("invalid EPG: {0}")]
    InvalidEpg(String),

    #[error("invalid model parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("invalid sharing: {0}")]
    InvalidSharing(String),

    #[error("{profile} and {epg} share no markers")]
    NoSharedMarkers { profile: String, epg: String },

    #[error("observed height {height} is below the threshold {threshold} and must be censored")]
    UncensoredPeak { height: f64, threshold: f64 },

    #[error("enumeration needs {required} genotype combinations at marker `{marker}`, cap is {cap}")]
    StateSpaceTooLarge {
        marker: String,
        required: f64,
        cap: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of the computation itself rather than of its inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::StateSpaceTooLarge { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
