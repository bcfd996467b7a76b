use std::path::PathBuf;

use thiserror::Error;

/// A row rejected while loading a dataset or landmark file.
#[derive(Debug, Clone, PartialEq)]
pub struct RowProblem {
    /// CSV: 1-based line number (the header is line 1). JSON: 1-based record index.
    pub row: usize,
    pub message: String,
}

impl std::fmt::Display for RowProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown glance label '{0}'")]
    UnknownGlance(String),

    #[error("unknown task kind '{0}'")]
    UnknownTask(String),

    #[error("unknown landmark role '{0}'")]
    UnknownLandmark(String),

    /// At most the first ten offending rows are kept.
    #[error("{total} invalid row(s): {}", format_rows(.rows))]
    InvalidRows { total: usize, rows: Vec<RowProblem> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no samples for requested class pair ({0}, {1})")]
    EmptyPair(String, String),

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("degenerate landmark configuration: {0}")]
    DegenerateLandmarks(String),

    #[error("overlapping glance spans at {0} ms")]
    OverlappingSpans(i64),

    #[error("training diverged (non-finite loss at epoch {epoch}); try a lower learning rate")]
    Diverged { epoch: usize },

    #[error("hmm state starvation persisted after {retries} re-initialisations")]
    StateStarvation { retries: usize },

    #[error("non-finite sequence likelihood for class {0}")]
    NonFiniteLikelihood(String),

    #[error("too many skipped iterations: {skipped} of {total}")]
    TooManySkips { skipped: usize, total: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(&'static str),
}

fn format_rows(rows: &[RowProblem]) -> String {
    rows.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn rows(problems: Vec<RowProblem>) -> Self {
        let total = problems.len();
        Error::InvalidRows {
            total,
            rows: problems.into_iter().take(10).collect(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
