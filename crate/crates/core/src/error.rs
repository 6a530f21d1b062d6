use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("observation {x} lies outside the support (upper bound {upper})")]
    OutOfSupport { x: f64, upper: f64 },
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("log-likelihood is not finite at the requested point")]
    InfeasiblePoint,
    #[error("infeasible initial point: {0}")]
    InfeasibleInit(String),
    #[error("no start reached the gradient tolerance ({starts} starts, best score norm {best_score_norm:e})")]
    NoConvergence { starts: usize, best_score_norm: f64 },
    #[error("fit did not converge")]
    NotConverged,
    #[error("information matrix is indefinite; delta-method variance is negative ({0:e})")]
    IndefiniteInformation(f64),
    #[error("mgf series not converged after {terms} terms (last term {last_term:e})")]
    SeriesNonConvergence { terms: usize, last_term: f64 },
    #[error("bootstrap refit failures ({failures}) exceed the allowed {allowed}")]
    TooManyRefitFailures { failures: usize, allowed: usize },
    #[error("no bootstrap draws available")]
    EmptyDraws,
    #[error("{failures} of {replications} Monte Carlo replications failed")]
    ExcessiveFailures {
        failures: usize,
        replications: usize,
    },
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("no usable observations after exclusions")]
    EmptyAfterExclusions,
    #[error("unsupported output format: {0}")]
    UnsupportedFormat(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::InvalidParameters(_)
            | Error::Domain(_)
            | Error::UnsupportedFormat(_)
            | Error::Config(_) => Category::Config,
            Error::OutOfSupport { .. }
            | Error::EmptySample
            | Error::InvalidData(_)
            | Error::InfeasibleInit(_)
            | Error::Parse { .. }
            | Error::EmptyAfterExclusions
            | Error::Io(_)
            | Error::Csv(_) => Category::Data,
            Error::InfeasiblePoint
            | Error::NoConvergence { .. }
            | Error::NotConverged
            | Error::IndefiniteInformation(_)
            | Error::SeriesNonConvergence { .. }
            | Error::TooManyRefitFailures { .. }
            | Error::EmptyDraws
            | Error::ExcessiveFailures { .. }
            | Error::Json(_) => Category::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
