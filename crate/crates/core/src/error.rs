use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("correlation {value} is not attainable for {pair}; attainable range is [{min:.6}, {max:.6}]")]
    Infeasible { pair: String, value: f64, min: f64, max: f64 },

    #[error("features {i} and {j}: {source}")]
    PairInfeasible {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no covariance solver for the marginal pair {0}")]
    UnsupportedPair(String),

    #[error("covariance factorization failed: {0}")]
    Factorization(String),

    #[error("feature column {0} has zero standard deviation")]
    ZeroVariance(usize),

    #[error("all {0} least-squares fits were rank deficient")]
    AllRankDeficient(usize),

    #[error("relative error undefined for coefficient {0}: true MSE is zero")]
    RelativeUndefined(usize),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("dataset row {row}, column '{column}': missing value")]
    MissingValue { row: usize, column: String },

    #[error("dataset row {row}, column '{column}': non-numeric value '{value}'")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("dataset columns '{a}' and '{b}' have correlation {value:.4}, above the bound {bound}")]
    CorrelationBound { a: String, b: String, value: f64, bound: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for errors caused by an unattainable scenario (skippable in a sweep).
    pub fn is_infeasible(&self) -> bool {
        matches!(
            self,
            Error::Infeasible { .. }
                | Error::PairInfeasible { .. }
                | Error::UnsupportedPair(_)
                | Error::Factorization(_)
                | Error::AllRankDeficient(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
