use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown study variable `{0}`")]
    UnknownVariable(String),

    #[error("domain {domain} is empty")]
    EmptyDomain { domain: usize },

    #[error("variance undefined for domain {domain}: {n} sampled unit(s), need at least 2")]
    UndefinedVariance { domain: usize, n: usize },

    #[error("joint inclusion probabilities are not available for this sample")]
    JointProbabilitiesUnavailable,

    #[error("singular Gram matrix ({context})")]
    SingularGram { context: String },

    #[error("design infeasible: household {household} (size {size}) would get inclusion probability {pi}")]
    DesignInfeasible { household: u64, size: usize, pi: f64 },

    #[error("enumeration would produce {count} samples, cap is {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("too few usable points for the fit: {usable} (need {needed})")]
    TooFewPoints { usable: usize, needed: usize },

    #[error("smoothed variance of domain {domain} is {value}; the GVF extrapolates out of range")]
    GvfOutOfRange { domain: usize, value: f64 },

    #[error("degenerate weight: denominator {denominator} is not positive")]
    DegenerateWeight { denominator: f64 },

    #[error("moment equation has no root below {upper}")]
    NonConvergence { upper: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
