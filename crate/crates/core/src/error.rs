use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (negative photon
    /// number, purity outside `[0, 1]`, unphysical moments, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A ratio statistic whose denominator vanished.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Arguments that are individually valid but cannot be combined.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("fit error: {0}")]
    Fit(String),

    /// Query outside the tabulated domain of a model; no extrapolation.
    #[error("out of range: {0}")]
    Range(String),

    /// A sweep point failed; carries the point context.
    #[error("at {context}: {source}")]
    AtPoint {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn at(self, context: impl Into<String>) -> Self {
        Error::AtPoint {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any point context.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtPoint { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by the user's configuration or input files
    /// rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self.root(),
            Error::Config(_) | Error::Usage(_) | Error::Range(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_)
        )
    }
}
