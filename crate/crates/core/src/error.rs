use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("measure weight at index {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("measure space has no points")]
    EmptySpace,
    #[error("{n} indices exceed the exhaustive enumeration limit {limit}; use sampling")]
    TooManyIndices { n: usize, limit: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative asymmetry {asymmetry:e})")]
    NonHermitian { asymmetry: f64 },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("{what} is not positive semidefinite (margin {margin:e})")]
    NotPsd { what: &'static str, margin: f64 },
    #[error("pencil methods disagree: schur {schur}, bisection {bisection}")]
    CrossCheckFailure { schur: f64, bisection: f64 },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },

    #[error("families live on different measure spaces")]
    SpaceMismatch,
    #[error("block {index} has shape {found:?}, expected {expected:?}")]
    BlockShapeMismatch { index: usize, expected: (usize, usize), found: (usize, usize) },
    #[error("coefficient or vector shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("measure weights differ at index {index}")]
    WeightMismatch { index: usize },

    #[error("cross-term positivity fails on partition {partition} (margin {margin:e})")]
    PositivityFailed { partition: String, margin: f64 },
    #[error("range of L is not reached on partition {partition} (defect {defect:e})")]
    AtomicDefect { partition: String, defect: f64 },
    #[error("family is not an approximate L-dual (t = {t})")]
    NotApproximateDual { t: f64 },
    #[error("dual construction residual {residual:e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },
    #[error("transform operator K is singular")]
    SingularK,
    #[error("perturbation constant {value} outside [0, 1)")]
    AlphaOutOfRange { value: f64 },

    #[error("invalid instance spec: {0}")]
    SpecInvalid(String),
    #[error("instance generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
