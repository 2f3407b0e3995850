use thiserror::Error;

/// Errors raised while building geometries, meshes, operators and preconditioners.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "curve diameter {diameter} exceeds 1; the log-kernel single layer operator may lose coercivity"
    )]
    CoercivityRisk { diameter: f64 },

    #[error("parameter {t} outside chart {chart} interval [{lo}, {hi}]")]
    Domain { chart: usize, t: f64, lo: f64, hi: f64 },

    #[error("{what} is not symmetric positive definite{hint}")]
    NotPositiveDefinite { what: String, hint: String },

    #[error("singular local system: {0}")]
    Singular(String),

    #[error("Richardson iteration diverges: spectral radius {radius} >= 1")]
    Divergence { radius: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn not_spd(what: impl Into<String>) -> Self {
        Error::NotPositiveDefinite { what: what.into(), hint: String::new() }
    }

    pub(crate) fn at_level(self, level: usize) -> Self {
        Error::AtLevel { level, source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
