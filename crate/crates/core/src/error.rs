use std::path::PathBuf;

/// Errors produced across the toolkit.
///
/// The CLI maps [`Error::is_user_error`] variants to exit code 2 and the rest
/// to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("time grid error: {0}")]
    Grid(String),

    #[error("bounds error: {0}")]
    Bounds(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("optimizer infeasible: {0}")]
    Infeasible(String),

    #[error("optimizer did not converge after {iterations} iterations (best cost {best_cost})")]
    NotConverged {
        iterations: usize,
        best_cost: f64,
        cost_trace: Vec<f64>,
    },

    #[error("optimizer unstable: {0}")]
    Unstable(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for configuration, schema and I/O problems (bad input rather than
    /// a numerical failure).
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Schema(_)
                | Error::Data { .. }
                | Error::Grid(_)
                | Error::Bounds(_)
                | Error::Config(_)
                | Error::Shape { .. }
                | Error::Io { .. }
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
