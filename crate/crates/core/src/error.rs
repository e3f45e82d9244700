use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {0} is negative")]
    NegativeTime(f64),

    #[error("lambda = {0} coincides with kernel pole")]
    KernelPole(Complex64),

    #[error("t = {t} outside covered interval [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("step matrix I - (h/2)A is singular for h = {0}")]
    SingularStep(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("lambda*I - (1 + a^(lambda))A is singular at lambda = {0}")]
    SingularFreeResolvent(Complex64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient history: {0}")]
    InsufficientHistory(String),

    #[error("corrector did not converge at t = {t} (defect {defect:e}); step too large")]
    CorrectorDiverged { t: f64, defect: f64 },

    #[error("spec field `{field}`: {message}")]
    SpecInvalid { field: String, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::SpecInvalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
