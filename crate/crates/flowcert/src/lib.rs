//! Flows of first and second order ODEs on time-dependent Riemannian
//! metrics, with numerical certification of the growth hypotheses that
//! guarantee completeness.

pub mod chart;
pub mod error;
pub mod expr;
pub mod geodesy;
pub mod growth;
pub mod metric;
pub mod ode;

pub use chart::{ChartManifold, TangentState};
pub use error::{Error, Result};
pub use growth::GrowthFunction;
pub use metric::MetricField;
