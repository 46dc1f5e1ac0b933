use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse JSON input: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("dimension mismatch in `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: String,
        found: String,
    },

    #[error("adjacency matrix is not symmetric with zero diagonal at ({row}, {col})")]
    Adjacency { row: usize, col: usize },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("system is not stable: spectral radius {spectral_radius} >= {limit}")]
    Unstable { spectral_radius: f64, limit: f64 },

    #[error("Smith iteration did not converge after {iterations} doublings (last update norm {update_norm:e})")]
    NoConvergence { iterations: usize, update_norm: f64 },

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("instance too large for exhaustive search: {count} candidates exceeds limit {limit}")]
    GuardExceeded { count: f64, limit: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("innovation covariance is singular; measurement noise scale is too small")]
    SingularInnovation,

    #[error("graph has no edges; modularity is undefined")]
    EmptyGraph,
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse(_) => "parse",
            Error::Dimension { .. } => "dimension",
            Error::Adjacency { .. } => "adjacency",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::Unstable { .. } => "unstable",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NotPsd(_) => "not_psd",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::GuardExceeded { .. } => "guard_exceeded",
            Error::Infeasible(_) => "infeasible",
            Error::SingularInnovation => "singular_innovation",
            Error::EmptyGraph => "empty_graph",
        }
    }
}
