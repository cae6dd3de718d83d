use thiserror::Error;

use crate::forms::Signature;

/// Errors raised by the geometric and state-space operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("form is degenerate: smallest eigenvalue magnitude {min_abs_eigenvalue:e} below {threshold:e}")]
    DegenerateForm {
        min_abs_eigenvalue: f64,
        threshold: f64,
    },

    #[error("principal minor m_{k} vanishes ({value:e}); minor-sign formula is not applicable")]
    MinorBreakdown { k: usize, value: f64 },

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("group element is singular (|det| = {0:e})")]
    SingularGroupElement(f64),

    #[error("frame is singular (|det| = {0:e})")]
    SingularFrame(f64),

    #[error("signature mismatch: {left} vs {right}")]
    SignatureMismatch { left: Signature, right: Signature },

    #[error("conjugation leaves the span of the algebra basis (residual {0:e})")]
    NotInvariantSubspace(f64),

    #[error("algebra basis is linearly dependent")]
    DependentAlgebraBasis,

    #[error("closed-form density is only available for n <= 2 (got n = {0})")]
    UnsupportedDimension(usize),

    #[error("operation requires signature {expected}, got {found}")]
    UnsupportedSignature { expected: String, found: Signature },

    #[error("no sample was accepted by the signature filter ({0} samples drawn)")]
    EmptyDomain(usize),

    #[error("invalid integration box: {0}")]
    InvalidBox(String),

    #[error("at least {min} samples are required (got {found})")]
    TooFewSamples { min: usize, found: usize },

    #[error("point {0} is not part of the field")]
    PointNotInField(u64),

    #[error("grid has no point with r^2 >= 1; it does not cover the unit ball")]
    GridTooCoarse,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("label is not contained in the target label")]
    LabelNotContained,

    #[error("state field has no vector for point {0}")]
    MissingPoint(u64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("quadrature domain too small: boundary contribution estimate {0:e} exceeds 1e-8")]
    QuadratureDomainTooSmall(f64),

    #[error("input functions are linearly dependent (Gram condition number {0:e})")]
    LinearlyDependentInput(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateForm { .. } => "DegenerateForm",
            Error::MinorBreakdown { .. } => "MinorBreakdown",
            Error::NotSymmetric(_) => "NotSymmetric",
            Error::NonFinite => "NonFinite",
            Error::NotSquare { .. } => "NotSquare",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::SingularGroupElement(_) => "SingularGroupElement",
            Error::SingularFrame(_) => "SingularFrame",
            Error::SignatureMismatch { .. } => "SignatureMismatch",
            Error::NotInvariantSubspace(_) => "NotInvariantSubspace",
            Error::DependentAlgebraBasis => "DependentAlgebraBasis",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::UnsupportedSignature { .. } => "UnsupportedSignature",
            Error::EmptyDomain(_) => "EmptyDomain",
            Error::InvalidBox(_) => "InvalidBox",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::PointNotInField(_) => "PointNotInField",
            Error::GridTooCoarse => "GridTooCoarse",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::LabelNotContained => "LabelNotContained",
            Error::MissingPoint(_) => "MissingPoint",
            Error::InvalidState(_) => "InvalidState",
            Error::QuadratureDomainTooSmall(_) => "QuadratureDomainTooSmall",
            Error::LinearlyDependentInput(_) => "LinearlyDependentInput",
            Error::Numerical(_) => "Numerical",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
