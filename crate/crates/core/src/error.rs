use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the coordinate box")]
    Domain { point: Vec<f64> },

    #[error("point {point:?} is within the difference step {step} of the boundary along axis {axis}")]
    NotInterior { point: Vec<f64>, axis: usize, step: f64 },

    #[error("non-finite value while evaluating {what} at {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid coordinate box: {0}")]
    InvalidDomain(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("singular {what} at {point:?}")]
    Singular { what: &'static str, point: Vec<f64> },

    #[error("tangent vector is not in the pullback bundle: base residual {residual:e} exceeds {tolerance:e}")]
    NotInPullback { residual: f64, tolerance: f64 },

    #[error("curve is not admissible: residual {residual:e} exceeds {tolerance:e}")]
    NotAdmissible { residual: f64, tolerance: f64 },

    #[error("state blew up after t = {last_good_t}")]
    BlowUp { last_good_t: f64 },

    #[error("{0}")]
    Rejected(String),
}
