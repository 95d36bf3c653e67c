use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(
        "filtration needs {count} simplices, over the budget of {budget}; \
         subsample the point cloud (or lower max_dim / max_radius)"
    )]
    Capacity { count: u128, budget: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("degenerate edge ({0}, {1}) of length {2:e}: gradient direction undefined")]
    DegenerateEdge(usize, usize, f64),

    #[error("kernel system is singular even with jitter {jitter:e}")]
    Singular { jitter: f64 },

    #[error("diagram has {size} points, over the exact matching budget of {budget}")]
    MatchingBudget { size: usize, budget: usize },

    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn at_epoch(self, epoch: usize) -> Self {
        match self {
            e @ Error::Epoch { .. } => e,
            e => Error::Epoch {
                epoch,
                source: Box::new(e),
            },
        }
    }

    /// True for simplex-budget failures, including ones wrapped with epoch context.
    pub fn is_capacity(&self) -> bool {
        match self {
            Error::Capacity { .. } => true,
            Error::Epoch { source, .. } => source.is_capacity(),
            _ => false,
        }
    }
}
