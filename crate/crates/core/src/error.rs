use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("element inversion under non-invertible model (element {element}, det F = {det:e})")]
    ElementInversion { element: usize, det: f64 },

    #[error("non-positive contact distance {distance:e} reached the barrier")]
    NonPositiveDistance { distance: f64 },

    #[error("degenerate boundary element (measure {measure:e})")]
    DegenerateElement { measure: f64 },

    #[error("PCG did not converge within {iterations} iterations (relative residual {residual:e})")]
    PcgNotConverged { iterations: usize, residual: f64 },

    #[error("Schur complement factorization failed in the {phase} phase")]
    Factorization { phase: &'static str },

    #[error("Newton did not converge within {iterations} iterations in the {phase} phase (last (1/h)|p| = {residual:e})")]
    NewtonNotConverged {
        phase: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("initial state is penetrating or too close: {pairs:?}")]
    InitialPenetration { pairs: Vec<String> },

    #[error("malformed frame file at byte {offset}: {reason}")]
    Frame { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
