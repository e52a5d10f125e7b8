use std::path::PathBuf;

use thiserror::Error;

use crate::aggregate::AggregateError;
use crate::calibrate::CalibrationError;
use crate::classify::ClassifyError;
use crate::collect::CollectError;
use crate::ingest::IngestError;
use crate::journals::JournalError;
use crate::metrics::MetricsError;
use crate::pairwise::PairwiseError;
use crate::rlsim::RlError;
use crate::stats::StatsError;
use crate::tiers::TierError;

/// Any failure surfaced by the command-line runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Tier(#[from] TierError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Pairwise(#[from] PairwiseError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Collect(#[from] CollectError),
}

impl Error {
    /// 2 for I/O and transport failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        let io = match self {
            Error::Io { .. } => true,
            Error::Ingest(e) | Error::Pairwise(PairwiseError::Ingest(e)) | Error::Collect(CollectError::Ingest(e)) => {
                matches!(e, IngestError::Io { .. })
            }
            Error::Collect(e) => matches!(
                e,
                CollectError::Io { .. } | CollectError::Transport(_) | CollectError::Auth(_) | CollectError::Rejected(_)
            ),
            Error::Rl(e) => matches!(e, RlError::Io { .. }),
            Error::Journal(JournalError::Csv(e)) => e.is_io_error(),
            Error::Metrics(MetricsError::Csv(e)) => e.is_io_error(),
            _ => false,
        };
        if io {
            2
        } else {
            1
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
