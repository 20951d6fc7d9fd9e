use thiserror::Error;

/// Errors raised by the geometry, flow and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} outside admissible range [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("field has {got} entries, grid has {expected} nodes")]
    Shape { expected: usize, got: usize },

    #[error("value {value} outside tabulated range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("graph left the working slab at node {node}: gamma = {gamma}, admissible [{lo}, {hi}]")]
    DomainEscape {
        node: usize,
        gamma: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value at node {node} after step {step}; reduce c_cfl")]
    Instability { node: usize, step: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("linear solve did not converge: residual {residual} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
