//! Coordinate charts for the supported manifold families.
//!
//! Everything downstream works in a single fixed chart: Euclidean space,
//! a flat torus with given periods, or the polar chart on the 2-sphere
//! with small bands around the poles excluded. There are no atlases and
//! no chart transitions; a trajectory that reaches the edge of the valid
//! region is reported as having left the chart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the excluded band around each sphere pole, in colatitude.
pub const SPHERE_POLE_BAND: f64 = 1e-6;

/// A fixed coordinate chart on one of the supported manifolds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ChartManifold {
    /// The chart is all of `R^dim`.
    Euclidean { dim: usize },
    /// Flat torus; coordinates are canonicalized into `[0, period)` per axis.
    FlatTorus { periods: Vec<f64> },
    /// Polar chart `(theta, phi)` on the unit 2-sphere, poles excluded.
    Sphere,
}

impl ChartManifold {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        ChartManifold::Euclidean { dim }
    }

    pub fn flat_torus(periods: Vec<f64>) -> Self {
        assert!(!periods.is_empty(), "torus needs at least one axis");
        assert!(periods.iter().all(|&p| p > 0.0), "torus periods must be positive");
        ChartManifold::FlatTorus { periods }
    }

    pub fn sphere() -> Self {
        ChartManifold::Sphere
    }

    pub fn dim(&self) -> usize {
        match self {
            ChartManifold::Euclidean { dim } => *dim,
            ChartManifold::FlatTorus { periods } => periods.len(),
            ChartManifold::Sphere => 2,
        }
    }

    /// Whether `q` lies in the valid region of the chart.
    ///
    /// Non-finite coordinates are always invalid. For the sphere this
    /// excludes the pole bands; for the torus any finite coordinate is
    /// valid (it names a point via canonicalization).
    pub fn is_valid(&self, q: &[f64]) -> bool {
        if q.len() != self.dim() || q.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            ChartManifold::Euclidean { .. } | ChartManifold::FlatTorus { .. } => true,
            ChartManifold::Sphere => {
                let theta = q[0];
                theta > SPHERE_POLE_BAND && theta < std::f64::consts::PI - SPHERE_POLE_BAND
            }
        }
    }

    /// `is_valid` as a `Result`, for call sites that must hard-error.
    pub fn check_point(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        if self.is_valid(q) {
            Ok(())
        } else {
            let reason = match self {
                ChartManifold::Sphere => "colatitude inside a pole band or non-finite".to_string(),
                _ => "non-finite coordinate".to_string(),
            };
            Err(Error::InvalidChartPoint {
                point: q.to_vec(),
                reason,
            })
        }
    }

    /// Canonical representative of `q`.
    ///
    /// Torus coordinates are wrapped into `[0, period)`; the sphere's
    /// longitude is wrapped into `[0, 2*pi)`. Euclidean points are
    /// returned unchanged.
    pub fn canonicalize(&self, q: &[f64]) -> Vec<f64> {
        match self {
            ChartManifold::Euclidean { .. } => q.to_vec(),
            ChartManifold::FlatTorus { periods } => q
                .iter()
                .zip(periods)
                .map(|(&x, &p)| x.rem_euclid(p))
                .collect(),
            ChartManifold::Sphere => {
                vec![q[0], q[1].rem_euclid(2.0 * std::f64::consts::PI)]
            }
        }
    }

    /// Chart-coordinate displacement from `from` to `to`, suitable as a
    /// shooting residual: periodic axes use the minimal signed difference.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        match self {
            ChartManifold::Euclidean { .. } => {
                from.iter().zip(to).map(|(a, b)| b - a).collect()
            }
            ChartManifold::FlatTorus { periods } => from
                .iter()
                .zip(to)
                .zip(periods)
                .map(|((a, b), &p)| wrap_signed(b - a, p))
                .collect(),
            ChartManifold::Sphere => {
                let dtheta = to[0] - from[0];
                let dphi = wrap_signed(to[1] - from[1], 2.0 * std::f64::consts::PI);
                vec![dtheta, dphi]
            }
        }
    }
}

/// Wrap `x` into `[-p/2, p/2)`.
fn wrap_signed(x: f64, p: f64) -> f64 {
    let r = x.rem_euclid(p);
    if r >= p / 2.0 {
        r - p
    } else {
        r
    }
}

/// A point of `R x TQ`: time, chart coordinates, velocity coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub t: f64,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

impl TangentState {
    pub fn new(t: f64, q: Vec<f64>, v: Vec<f64>) -> Self {
        TangentState { t, q, v }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.q.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn torus_canonicalization_wraps_into_fundamental_domain() {
        let m = ChartManifold::flat_torus(vec![2.0, 3.0]);
        let q = m.canonicalize(&[-0.5, 7.25]);
        assert_relative_eq!(q[0], 1.5);
        assert_relative_eq!(q[1], 1.25);
    }

    #[test]
    fn torus_displacement_takes_shortest_representative() {
        let m = ChartManifold::flat_torus(vec![2.0 * std::f64::consts::PI]);
        let d = m.displacement(&[0.1], &[2.0 * std::f64::consts::PI - 0.1]);
        assert_relative_eq!(d[0], -0.2, epsilon = 1e-12);
    }

    #[test]
    fn sphere_rejects_pole_bands() {
        let m = ChartManifold::sphere();
        assert!(!m.is_valid(&[1e-7, 0.0]));
        assert!(!m.is_valid(&[std::f64::consts::PI - 1e-7, 0.0]));
        assert!(m.is_valid(&[0.5, 1.0]));
        assert!(m.check_point(&[1e-7, 0.0]).is_err());
    }

    #[test]
    fn non_finite_points_are_invalid_everywhere() {
        let m = ChartManifold::euclidean(2);
        assert!(!m.is_valid(&[f64::NAN, 0.0]));
        assert!(!m.is_valid(&[f64::INFINITY, 0.0]));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = ChartManifold::euclidean(2);
        assert!(matches!(
            m.check_point(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }
}
