//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry evaluation, integration and certification.
///
/// Soft outcomes (a shooting solve that did not converge, a certification
/// check that fails) are *not* errors; they are reported through result
/// structs so callers can decide. Everything here is a hard error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid chart point {point:?}: {reason}")]
    InvalidChartPoint { point: Vec<f64>, reason: String },

    #[error(
        "metric not positive definite at t={t}, q={q:?} (min eigenvalue {min_eig:e}, max {max_eig:e})"
    )]
    NonPositiveDefinite {
        t: f64,
        q: Vec<f64>,
        min_eig: f64,
        max_eig: f64,
    },

    #[error("singular matrix while solving at t={t}, q={q:?}")]
    SingularMetric { t: f64, q: Vec<f64> },

    #[error("field evaluation produced a non-finite value at t={t}, q={q:?}, v={v:?}")]
    NonFiniteField { t: f64, q: Vec<f64>, v: Vec<f64> },

    #[error("geodesic left the chart validity region at parameter {param}")]
    LeftChartRegion { param: f64 },

    #[error("integration step budget of {max_steps} exhausted at t={t}")]
    StepBudgetExhausted { max_steps: usize, t: f64 },

    #[error("inverse of growth integral out of reach: G({attained_x:e}) = {attained_value:e} < target {target:e}")]
    InversionOutOfRange {
        target: f64,
        attained_x: f64,
        attained_value: f64,
    },

    #[error("argument {value} outside domain {domain}")]
    OutOfDomain { value: f64, domain: &'static str },

    #[error("lifted metric has wrong signature at {point:?}: {negative} negative eigenvalue(s)")]
    BadSignature { point: Vec<f64>, negative: usize },

    #[error("lifted geodesic is not a graph over t: dt/dlambda = {dt_dlambda} at lambda = {lambda}")]
    NonGraphProjection { lambda: f64, dt_dlambda: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
