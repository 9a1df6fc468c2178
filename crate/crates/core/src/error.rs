use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error categories, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    Config,
    Parse,
    Dimension,
    Numeric,
    InsufficientInstruments,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 1,
            ErrorClass::Parse => 2,
            ErrorClass::Dimension => 3,
            ErrorClass::Numeric => 4,
            ErrorClass::InsufficientInstruments => 5,
            ErrorClass::Io => 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: expected {expected} fields, found {found}", path.display())]
    RowWidthMismatch {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate SNP {rsid}")]
    DuplicateSnp { rsid: String },

    #[error("{}: no data rows", path.display())]
    EmptyMatrix { path: PathBuf },

    #[error("missing column {column:?}")]
    MissingColumn { column: String },

    #[error("row {row}: invalid {field}: {reason}")]
    InvalidValue {
        row: usize,
        field: String,
        reason: String,
    },

    #[error("exposure and outcome share no SNPs")]
    NoOverlap,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("LD matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("LD matrix diagonal at {index} is {value}, expected 1")]
    NonUnitDiagonal { index: usize, value: f64 },

    #[error("LD entry ({row}, {col}) = {value} is outside [-1, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },

    #[error("LD matrix is not positive definite after regularization")]
    NotPositiveDefinite,

    #[error("SNP {rsid} is absent from the LD matrix")]
    MissingLd { rsid: String },

    #[error("exposure effect is zero for {rsid}")]
    ZeroExposureEffect { rsid: String },

    #[error("no usable instruments")]
    EmptyInstrumentSet,

    #[error("{method} needs at least {required} instruments, found {found}")]
    TooFewInstruments {
        method: &'static str,
        required: usize,
        found: usize,
    },

    #[error("degenerate design: all exposure effects are equal after orientation")]
    DegenerateDesign,

    #[error("design is rank deficient (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("numerical overflow while scoring model")]
    NumericalOverflow,

    #[error("invalid model sizes: {0}")]
    InvalidSizes(String),

    #[error("gene {gene} has no significant eQTLs")]
    NoSignificantEqtls { gene: String },

    #[error("protein {protein} has no annotation")]
    UnknownProtein { protein: String },

    #[error("protein {protein}: no instruments selected for {mode}")]
    NoInstruments { protein: String, mode: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: String, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Io { .. } => ErrorClass::Io,
            Malformed { .. }
            | RowWidthMismatch { .. }
            | DuplicateSnp { .. }
            | EmptyMatrix { .. }
            | MissingColumn { .. }
            | InvalidValue { .. }
            | UnknownProtein { .. } => ErrorClass::Parse,
            DimensionMismatch(_)
            | NotSymmetric { .. }
            | NonUnitDiagonal { .. }
            | OutOfRange { .. }
            | MissingLd { .. } => ErrorClass::Dimension,
            NotPositiveDefinite
            | ZeroExposureEffect { .. }
            | DegenerateDesign
            | SingularDesign { .. }
            | NumericalOverflow => ErrorClass::Numeric,
            NoOverlap
            | EmptyInstrumentSet
            | TooFewInstruments { .. }
            | NoSignificantEqtls { .. }
            | NoInstruments { .. } => ErrorClass::InsufficientInstruments,
            InvalidSizes(_) | InvalidParameter { .. } => ErrorClass::Config,
        }
    }
}
