use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mean {mu} is not admissible for variance function {variance}")]
    InadmissibleMean { mu: f64, variance: &'static str },

    #[error("invalid dispersion: {0}")]
    InvalidDispersion(String),

    /// The weighted design matrix is rank deficient.
    #[error("design matrix is singular or rank deficient")]
    SingularDesign,

    #[error("leading block of the information matrix is singular")]
    SingularBlock,

    #[error("moment matrix E[wZZ'] is singular")]
    SingularMoment,

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("effect size {f2} requires more than {cap} observations")]
    TooSmallEffect { f2: f64, cap: u64 },

    #[error("grid is empty")]
    EmptyGrid,

    #[error("scenario failed: {0}")]
    ScenarioFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable code used by the HTTP and C interfaces.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain_error",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::InadmissibleMean { .. } => "inadmissible_mean",
            Error::InvalidDispersion(_) => "invalid_dispersion",
            Error::SingularDesign => "singular_design",
            Error::SingularBlock => "singular_block",
            Error::SingularMoment => "singular_moment",
            Error::SingularInformation => "singular_information",
            Error::NonConvergence { .. } => "non_convergence",
            Error::TooSmallEffect { .. } => "too_small_effect",
            Error::EmptyGrid => "empty_grid",
            Error::ScenarioFailed(_) => "scenario_failed",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }

    /// True for errors caused by the values supplied rather than by malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InadmissibleMean { .. }
                | Error::InvalidDispersion(_)
                | Error::SingularDesign
                | Error::SingularBlock
                | Error::SingularMoment
                | Error::SingularInformation
                | Error::NonConvergence { .. }
                | Error::TooSmallEffect { .. }
                | Error::ScenarioFailed(_)
        )
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
