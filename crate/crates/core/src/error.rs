use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("resource limit: {what} has dimension {dim}, cap is {cap}")]
    Resource { what: String, dim: usize, cap: usize },

    /// A denominator of the effective Hamiltonian vanishes (or nearly so).
    #[error("resonance: {0}")]
    Resonance(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The requested computation needs a representation that is not available
    /// (e.g. a full diagonalization above the dense cap).
    #[error("capability: {0}")]
    Capability(String),

    #[error("degenerate BdG problem: {0}")]
    Degeneracy(String),

    #[error("data collapse: {0}")]
    Collapse(String),

    #[error("diagnostic: {0}")]
    Diagnostic(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
