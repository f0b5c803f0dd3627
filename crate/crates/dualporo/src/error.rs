use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Scenario configuration is invalid; carries the violated assumption labels.
    #[error("config error: {0}")]
    Config(String),

    /// A geometry descriptor cannot be realized on the requested grid.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// A linear or nonlinear solve failed to converge.
    #[error("solver error: {0}")]
    Solver(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
    pub fn solver(msg: impl Into<String>) -> Self {
        Error::Solver(msg.into())
    }
}
