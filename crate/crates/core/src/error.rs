use alloc::string::String;
use core::fmt;

use crate::constraints::{BindError, ParseError};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Shapes of data, pattern or model do not agree.
    Dimension(String),
    /// Implied covariance (or another matrix that must be PD) is not positive definite.
    NotPositiveDefinite,
    /// Data set fails ingestion or invariant checks.
    InvalidData(String),
    /// A column has zero sample variance and cannot be standardized.
    ConstantColumn { item: String },
    InvalidModel(String),
    InvalidConfig(String),
    /// The loading-row full conditional has a singular precision matrix.
    DegenerateConditional { row: usize },
    /// A chain produced a non-finite log kernel.
    DivergentChain { iteration: usize },
    /// A posterior ordinate in the candidate estimator is not finite.
    DegenerateOrdinate,
    /// Too many training-sample marginals were not finite.
    TrainingSizeTooSmall { failed: usize, total: usize },
    NoAdmissibleDimensionality,
    /// The uniform-ball prior needs standardized data.
    StandardizedDataRequired,
    /// A chain was produced under a different pattern or prior than required.
    ChainMismatch(String),
    Parse(ParseError),
    Bind(BindError),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::NotPositiveDefinite => write!(f, "covariance not PD"),
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::ConstantColumn { item } => {
                write!(f, "item '{item}' has zero sample variance and cannot be standardized")
            }
            Error::InvalidModel(msg) => write!(f, "invalid model: {msg}"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::DegenerateConditional { row } => {
                write!(f, "degenerate conditional; check rank diagnostics (item row {})", row + 1)
            }
            Error::DivergentChain { iteration } => {
                write!(f, "divergent chain: non-finite log kernel at iteration {iteration}")
            }
            Error::DegenerateOrdinate => write!(f, "ordinate degenerate — run regularity assessment"),
            Error::TrainingSizeTooSmall { failed, total } => write!(
                f,
                "training size too small: {failed} of {total} training-sample marginals were not finite"
            ),
            Error::NoAdmissibleDimensionality => {
                write!(f, "no admissible dimensionality; inspect data")
            }
            Error::StandardizedDataRequired => {
                write!(f, "the encompassing uniform-ball prior requires standardized data")
            }
            Error::ChainMismatch(msg) => write!(f, "chain/pattern mismatch: {msg}"),
            Error::Parse(e) => write!(f, "{e}"),
            Error::Bind(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for Error {}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::Parse(e)
    }
}

impl From<BindError> for Error {
    fn from(e: BindError) -> Self {
        Error::Bind(e)
    }
}
