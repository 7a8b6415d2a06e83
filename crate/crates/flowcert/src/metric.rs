//! Time-dependent Riemannian metrics on a chart.
//!
//! A [`MetricField`] evaluates `a_t(q)` as a symmetric positive definite
//! matrix, together with its time derivative and spatial derivatives
//! (analytic when supplied, central finite differences otherwise), and
//! from those the Christoffel symbols of the frozen metric `a_t`.
//!
//! The built-in catalog covers the fixtures used throughout the crate:
//!
//! ```
//! use flowcert::chart::TangentState;
//! use flowcert::metric::MetricField;
//!
//! // a_t = exp(2 t) * I on the real line: the norm of v = 1 at t = 1 is e.
//! let m = MetricField::conformal_exp(1);
//! let s = TangentState::new(1.0, vec![0.0], vec![1.0]);
//! assert!((m.norm(&s).unwrap() - std::f64::consts::E).abs() < 1e-12);
//! ```

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::chart::{ChartManifold, TangentState};
use crate::error::{Error, Result};
use crate::expr::{tq_names, Expr};

/// Base step for spatial central differences, scaled by `max(1, |q_i|)`.
pub const SPATIAL_FD_STEP: f64 = 1e-5;
/// Base step for temporal central differences, scaled by `max(1, |t|)`.
pub const TEMPORAL_FD_STEP: f64 = 1e-5;
/// Positive definiteness: smallest eigenvalue must exceed this fraction of
/// the largest.
pub const PD_REL_TOL: f64 = 1e-12;

pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> DMatrix<f64> + Send + Sync>;
pub type PartialMatrixFn = Arc<dyn Fn(f64, &[f64], usize) -> DMatrix<f64> + Send + Sync>;
pub type ClosedDistanceFn = Arc<dyn Fn(f64, &[f64], &[f64]) -> f64 + Send + Sync>;

/// Whether derivatives come from closed forms or central differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference,
}

/// A time-dependent metric `a_t` on a chart.
pub struct MetricField {
    manifold: ChartManifold,
    name: String,
    eval: MatrixFn,
    dt_eval: Option<MatrixFn>,
    dq_eval: Option<PartialMatrixFn>,
    closed_distance: Option<ClosedDistanceFn>,
    fd_scale: f64,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricField")
            .field("name", &self.name)
            .field("manifold", &self.manifold)
            .field("mode", &self.mode())
            .finish()
    }
}

impl Clone for MetricField {
    fn clone(&self) -> Self {
        MetricField {
            manifold: self.manifold.clone(),
            name: self.name.clone(),
            eval: Arc::clone(&self.eval),
            dt_eval: self.dt_eval.clone(),
            dq_eval: self.dq_eval.clone(),
            closed_distance: self.closed_distance.clone(),
            fd_scale: self.fd_scale,
        }
    }
}

impl MetricField {
    pub fn new(manifold: ChartManifold, name: impl Into<String>, eval: MatrixFn) -> Self {
        MetricField {
            manifold,
            name: name.into(),
            eval,
            dt_eval: None,
            dq_eval: None,
            closed_distance: None,
            fd_scale: 1.0,
        }
    }

    pub fn with_dt(mut self, dt_eval: MatrixFn) -> Self {
        self.dt_eval = Some(dt_eval);
        self
    }

    pub fn with_dq(mut self, dq_eval: PartialMatrixFn) -> Self {
        self.dq_eval = Some(dq_eval);
        self
    }

    pub fn with_closed_distance(mut self, f: ClosedDistanceFn) -> Self {
        self.closed_distance = Some(f);
        self
    }

    /// Scale the finite-difference steps; used by convergence tests.
    pub fn with_fd_scale(mut self, scale: f64) -> Self {
        assert!(scale > 0.0);
        self.fd_scale = scale;
        self
    }

    pub fn manifold(&self) -> &ChartManifold {
        &self.manifold
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim()
    }

    pub fn mode(&self) -> DerivativeMode {
        if self.dt_eval.is_some() && self.dq_eval.is_some() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::FiniteDifference
        }
    }

    /// Closed-form distance `rho_t(p, q)` when the catalog provides one.
    pub fn closed_distance(&self, t: f64, p: &[f64], q: &[f64]) -> Option<f64> {
        self.closed_distance.as_ref().map(|f| f(t, p, q))
    }

    pub fn has_closed_distance(&self) -> bool {
        self.closed_distance.is_some()
    }

    /// Evaluate `a_t(q)`, enforcing chart validity and positive
    /// definiteness (smallest eigenvalue above `PD_REL_TOL` times the
    /// largest).
    pub fn matrix(&self, t: f64, q: &[f64]) -> Result<DMatrix<f64>> {
        self.manifold.check_point(q)?;
        let qc = self.manifold.canonicalize(q);
        self.eval_checked(t, q, &qc)
    }

    /// Evaluate at an already canonicalized point, running the positive
    /// definiteness check; `q_orig` only feeds error messages.
    fn eval_checked(&self, t: f64, q_orig: &[f64], qc: &[f64]) -> Result<DMatrix<f64>> {
        let a = symmetrize(&(self.eval)(t, qc));
        let (min_eig, max_eig) = symmetric_eig_bounds(&a);
        if !(min_eig.is_finite() && max_eig > 0.0 && min_eig > PD_REL_TOL * max_eig) {
            return Err(Error::NonPositiveDefinite {
                t,
                q: q_orig.to_vec(),
                min_eig,
                max_eig,
            });
        }
        Ok(a)
    }

    /// Inverse metric `a_t^{-1}(q)`.
    pub fn inverse(&self, t: f64, q: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.matrix(t, q)?;
        a.clone().try_inverse().ok_or(Error::SingularMetric {
            t,
            q: q.to_vec(),
        })
    }

    /// `sqrt(a_t(v, v))` at the state's point; zero iff `v = 0`.
    pub fn norm(&self, s: &TangentState) -> Result<f64> {
        let a = self.matrix(s.t, &s.q)?;
        let v = DVector::from_column_slice(&s.v);
        Ok((v.dot(&(&a * &v))).max(0.0).sqrt())
    }

    /// Covector norm `sqrt(w a_t^{-1} w)` using the inverse metric.
    pub fn conorm(&self, t: f64, q: &[f64], w: &[f64]) -> Result<f64> {
        let inv = self.inverse(t, q)?;
        let wv = DVector::from_column_slice(w);
        Ok((wv.dot(&(&inv * &wv))).max(0.0).sqrt())
    }

    /// Time derivative `(d/dt) a_t(q)`, analytic or central difference.
    pub fn dt_matrix(&self, t: f64, q: &[f64]) -> Result<DMatrix<f64>> {
        self.manifold.check_point(q)?;
        let qc = self.manifold.canonicalize(q);
        if let Some(f) = &self.dt_eval {
            return Ok(symmetrize(&f(t, &qc)));
        }
        let h = TEMPORAL_FD_STEP * t.abs().max(1.0) * self.fd_scale;
        let plus = (self.eval)(t + h, &qc);
        let minus = (self.eval)(t - h, &qc);
        Ok(symmetrize(&((plus - minus) / (2.0 * h))))
    }

    /// `(∂_t a_t)(v, v)` at the state's point.
    pub fn dt_quadratic_form(&self, s: &TangentState) -> Result<f64> {
        let da = self.dt_matrix(s.t, &s.q)?;
        let v = DVector::from_column_slice(&s.v);
        Ok(v.dot(&(&da * &v)))
    }

    /// Spatial derivative `∂_{q_axis} a_t(q)`.
    pub fn dq_matrix(&self, t: f64, q: &[f64], axis: usize) -> Result<DMatrix<f64>> {
        self.manifold.check_point(q)?;
        let qc = self.manifold.canonicalize(q);
        Ok(self.dq_at_canonical(t, &qc, axis))
    }

    /// Spatial derivative at an already canonicalized point. Finite
    /// difference probes evaluate the raw closure: they feed derivative
    /// estimates, not metric queries, so they skip the definiteness check.
    fn dq_at_canonical(&self, t: f64, qc: &[f64], axis: usize) -> DMatrix<f64> {
        if let Some(f) = &self.dq_eval {
            return symmetrize(&f(t, qc, axis));
        }
        let h = SPATIAL_FD_STEP * qc[axis].abs().max(1.0) * self.fd_scale;
        let mut qp = qc.to_vec();
        let mut qm = qc.to_vec();
        qp[axis] += h;
        qm[axis] -= h;
        let plus = (self.eval)(t, &qp);
        let minus = (self.eval)(t, &qm);
        symmetrize(&((plus - minus) / (2.0 * h)))
    }

    /// Christoffel symbols of the frozen metric `a_t` at `(t, q)`:
    /// `Γ^k_{ij} = a^{kl} (∂_i a_{lj} + ∂_j a_{li} − ∂_l a_{ij}) / 2`.
    pub fn christoffel(&self, t: f64, q: &[f64]) -> Result<Christoffel> {
        let d = self.dim();
        self.manifold.check_point(q)?;
        let qc = self.manifold.canonicalize(q);
        let a = self.eval_checked(t, q, &qc)?;
        let inv = a.clone().try_inverse().ok_or(Error::SingularMetric {
            t,
            q: q.to_vec(),
        })?;
        let mut da = Vec::with_capacity(d);
        for axis in 0..d {
            da.push(self.dq_at_canonical(t, &qc, axis));
        }
        let mut gamma = vec![DMatrix::zeros(d, d); d];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut sum = 0.0;
                    for l in 0..d {
                        sum += inv[(k, l)] * (da[i][(l, j)] + da[j][(l, i)] - da[l][(i, j)]);
                    }
                    let value = 0.5 * sum;
                    gamma[k][(i, j)] = value;
                    gamma[k][(j, i)] = value;
                }
            }
        }
        Ok(Christoffel { gamma })
    }
}

/// Rank-3 array `Γ^k_{ij}`, symmetric in the lower indices.
#[derive(Debug, Clone)]
pub struct Christoffel {
    gamma: Vec<DMatrix<f64>>,
}

impl Christoffel {
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.gamma[k][(i, j)]
    }

    /// Quadratic contraction `(Γ v v)^k = Γ^k_{ij} v^i v^j`.
    pub fn contract(&self, v: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(d);
        for k in 0..d {
            let g = &self.gamma[k];
            let mut sum = 0.0;
            for i in 0..d {
                for j in 0..d {
                    sum += g[(i, j)] * v[i] * v[j];
                }
            }
            out[k] = sum;
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0f64, |acc, &x| acc.max(x.abs()))
    }
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Smallest and largest eigenvalue of a symmetric matrix. Diagonal and
/// 2x2 cases use closed forms; they dominate the integrator hot loops,
/// where a general eigendecomposition per stage is far too slow.
fn symmetric_eig_bounds(a: &DMatrix<f64>) -> (f64, f64) {
    let d = a.nrows();
    if d == 1 {
        return (a[(0, 0)], a[(0, 0)]);
    }
    let mut diagonal = true;
    'outer: for i in 0..d {
        for j in 0..d {
            if i != j && a[(i, j)] != 0.0 {
                diagonal = false;
                break 'outer;
            }
        }
    }
    if diagonal {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..d {
            min = min.min(a[(i, i)]);
            max = max.max(a[(i, i)]);
        }
        return (min, max);
    }
    if d == 2 {
        let (p, q, r) = (a[(0, 0)], a[(1, 1)], a[(0, 1)]);
        let mean = 0.5 * (p + q);
        let disc = (0.25 * (p - q) * (p - q) + r * r).sqrt();
        return (mean - disc, mean + disc);
    }
    let eigs = a.clone().symmetric_eigenvalues();
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

impl MetricField {
    /// Flat metric `I` on `R^dim`.
    pub fn euclidean(dim: usize) -> Self {
        let manifold = ChartManifold::euclidean(dim);
        MetricField::new(
            manifold.clone(),
            "euclidean",
            Arc::new(move |_t, _q| DMatrix::identity(dim, dim)),
        )
        .with_dt(Arc::new(move |_t, _q| DMatrix::zeros(dim, dim)))
        .with_dq(Arc::new(move |_t, _q, _axis| DMatrix::zeros(dim, dim)))
        .with_closed_distance(Arc::new(move |_t, p, q| {
            l2(&q.iter().zip(p).map(|(b, a)| b - a).collect::<Vec<_>>())
        }))
    }

    /// Conformal metric `exp(2 t) I` on `R^dim`; distances scale by `exp(t)`.
    pub fn conformal_exp(dim: usize) -> Self {
        MetricField::new(
            ChartManifold::euclidean(dim),
            "conformal-exp",
            Arc::new(move |t: f64, _q: &[f64]| DMatrix::identity(dim, dim) * (2.0 * t).exp()),
        )
        .with_dt(Arc::new(move |t: f64, _q: &[f64]| {
            DMatrix::identity(dim, dim) * (2.0 * (2.0 * t).exp())
        }))
        .with_dq(Arc::new(move |_t, _q, _axis| DMatrix::zeros(dim, dim)))
        .with_closed_distance(Arc::new(move |t: f64, p: &[f64], q: &[f64]| {
            t.exp() * l2(&q.iter().zip(p).map(|(b, a)| b - a).collect::<Vec<_>>())
        }))
    }

    /// Conformal metric `(1 + t^2) I` on `R^dim`.
    pub fn conformal_poly(dim: usize) -> Self {
        MetricField::new(
            ChartManifold::euclidean(dim),
            "conformal-poly",
            Arc::new(move |t: f64, _q: &[f64]| DMatrix::identity(dim, dim) * (1.0 + t * t)),
        )
        .with_dt(Arc::new(move |t: f64, _q: &[f64]| {
            DMatrix::identity(dim, dim) * (2.0 * t)
        }))
        .with_dq(Arc::new(move |_t, _q, _axis| DMatrix::zeros(dim, dim)))
        .with_closed_distance(Arc::new(move |t: f64, p: &[f64], q: &[f64]| {
            (1.0 + t * t).sqrt()
                * l2(&q.iter().zip(p).map(|(b, a)| b - a).collect::<Vec<_>>())
        }))
    }

    /// Round metric `diag(1, sin^2 theta)` on the sphere chart.
    pub fn sphere() -> Self {
        MetricField::new(
            ChartManifold::sphere(),
            "sphere",
            Arc::new(|_t: f64, q: &[f64]| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, q[0].sin().powi(2)]))
            }),
        )
        .with_dt(Arc::new(|_t, _q| DMatrix::zeros(2, 2)))
        .with_dq(Arc::new(|_t: f64, q: &[f64], axis: usize| {
            let mut out = DMatrix::zeros(2, 2);
            if axis == 0 {
                out[(1, 1)] = (2.0 * q[0]).sin(); // d/dtheta sin^2 = sin 2theta
            }
            out
        }))
        .with_closed_distance(Arc::new(|_t: f64, p: &[f64], q: &[f64]| {
            let c = p[0].cos() * q[0].cos() + p[0].sin() * q[0].sin() * (p[1] - q[1]).cos();
            c.clamp(-1.0, 1.0).acos()
        }))
    }

    /// Flat metric on a torus with the given periods.
    pub fn flat_torus(periods: Vec<f64>) -> Self {
        let dim = periods.len();
        let manifold = ChartManifold::flat_torus(periods);
        let mf = manifold.clone();
        MetricField::new(
            manifold,
            "flat-torus",
            Arc::new(move |_t, _q| DMatrix::identity(dim, dim)),
        )
        .with_dt(Arc::new(move |_t, _q| DMatrix::zeros(dim, dim)))
        .with_dq(Arc::new(move |_t, _q, _axis| DMatrix::zeros(dim, dim)))
        .with_closed_distance(Arc::new(move |_t: f64, p: &[f64], q: &[f64]| {
            l2(&mf.displacement(p, q))
        }))
    }

    /// Metric with entries given as expressions in `(t, q1..qd)`.
    ///
    /// Spatial derivatives always come from finite differences; the time
    /// derivative uses `dt_entries` when provided. No closed-form distance.
    pub fn custom(
        manifold: ChartManifold,
        entries: &[Vec<String>],
        dt_entries: Option<&[Vec<String>]>,
    ) -> Result<Self> {
        let dim = manifold.dim();
        let compiled = compile_matrix(entries, dim)?;
        let eval: MatrixFn = Arc::new(move |t: f64, q: &[f64]| eval_matrix(&compiled, dim, t, q));
        let mut field = MetricField::new(manifold, "custom", eval);
        if let Some(dts) = dt_entries {
            let compiled_dt = compile_matrix(dts, dim)?;
            field = field.with_dt(Arc::new(move |t: f64, q: &[f64]| {
                eval_matrix(&compiled_dt, dim, t, q)
            }));
        }
        Ok(field)
    }

    /// Look up a catalog metric by name.
    pub fn catalog(name: &str, manifold: &ChartManifold) -> Result<Self> {
        let dim = manifold.dim();
        let built = match name {
            "euclidean" => match manifold {
                ChartManifold::Euclidean { .. } => MetricField::euclidean(dim),
                ChartManifold::FlatTorus { periods } => {
                    MetricField::flat_torus(periods.clone())
                }
                ChartManifold::Sphere => {
                    return Err(Error::Config(
                        "metric `euclidean` is not defined on the sphere chart; use `sphere`"
                            .into(),
                    ))
                }
            },
            "conformal-exp" => MetricField::conformal_exp(dim),
            "conformal-poly" => MetricField::conformal_poly(dim),
            "sphere" => MetricField::sphere(),
            "flat-torus" => match manifold {
                ChartManifold::FlatTorus { periods } => {
                    MetricField::flat_torus(periods.clone())
                }
                _ => {
                    return Err(Error::Config(
                        "metric `flat-torus` requires a flat-torus manifold".into(),
                    ))
                }
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown catalog metric `{other}` (expected euclidean, conformal-exp, \
                     conformal-poly, sphere, flat-torus or custom)"
                )))
            }
        };
        if built.manifold() != manifold {
            return Err(Error::Config(format!(
                "metric `{name}` does not match the declared manifold {manifold:?}"
            )));
        }
        Ok(built)
    }
}

fn compile_matrix(entries: &[Vec<String>], dim: usize) -> Result<Vec<Vec<Expr>>> {
    if entries.len() != dim || entries.iter().any(|row| row.len() != dim) {
        return Err(Error::Config(format!(
            "custom metric needs a {dim}x{dim} entry matrix"
        )));
    }
    let names = tq_names(dim);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    entries
        .iter()
        .map(|row| row.iter().map(|s| Expr::compile(s, &name_refs)).collect())
        .collect()
}

fn eval_matrix(compiled: &[Vec<Expr>], dim: usize, t: f64, q: &[f64]) -> DMatrix<f64> {
    let mut vars = Vec::with_capacity(dim + 1);
    vars.push(t);
    vars.extend_from_slice(q);
    DMatrix::from_fn(dim, dim, |i, j| compiled[i][j].eval(&vars))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn flat_norm_is_euclidean() {
        let m = MetricField::euclidean(2);
        let s = TangentState::new(0.0, vec![0.0, 0.0], vec![3.0, 4.0]);
        assert_relative_eq!(m.norm(&s).unwrap(), 5.0);
    }

    #[test]
    fn conformal_norm_picks_up_the_factor() {
        let m = MetricField::conformal_exp(1);
        let s = TangentState::new(1.0, vec![0.0], vec![1.0]);
        assert_relative_eq!(m.norm(&s).unwrap(), std::f64::consts::E, epsilon = 1e-14);
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        let m = MetricField::sphere();
        let s = TangentState::new(0.3, vec![1.0, 2.0], vec![0.0, 0.0]);
        assert_relative_eq!(m.norm(&s).unwrap(), 0.0);
    }

    #[test]
    fn non_positive_definite_metric_is_a_hard_error() {
        let m = MetricField::new(
            ChartManifold::euclidean(2),
            "bad",
            Arc::new(|_t, _q| {
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
            }),
        );
        let err = m.matrix(0.0, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NonPositiveDefinite { .. }));
        assert!(err.to_string().contains("t=0"));
    }

    #[test]
    fn flat_christoffel_vanishes() {
        let m = MetricField::euclidean(3);
        let gamma = m.christoffel(1.3, &[0.4, -2.0, 7.0]).unwrap();
        assert!(gamma.max_abs() < 1e-15);
    }

    #[test]
    fn conformal_christoffel_vanishes_at_every_time() {
        // the factor is space-constant, so spatial derivatives vanish
        let m = MetricField::conformal_exp(2);
        for &t in &[-1.0, 0.0, 0.7, 2.0] {
            let gamma = m.christoffel(t, &[1.0, -1.0]).unwrap();
            assert!(gamma.max_abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn sphere_christoffel_matches_symbolic_values() {
        // chart metric diag(1, sin^2 theta):
        //   Gamma^theta_{phi phi} = -sin(theta) cos(theta)
        //   Gamma^phi_{theta phi} = cot(theta)
        let m = MetricField::sphere();
        let theta = std::f64::consts::FRAC_PI_4;
        let gamma = m.christoffel(0.0, &[theta, 1.0]).unwrap();
        assert_relative_eq!(gamma.get(0, 1, 1), -0.5, epsilon = 1e-14);
        assert_relative_eq!(gamma.get(1, 0, 1), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gamma.get(1, 1, 0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gamma.get(0, 0, 0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn finite_difference_christoffel_matches_symbolic_to_1e8() {
        // same sphere metric, but derivatives via central differences
        let analytic = MetricField::sphere();
        let fd = MetricField::new(
            ChartManifold::sphere(),
            "sphere-fd",
            Arc::new(|_t: f64, q: &[f64]| {
                DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, q[0].sin().powi(2)]))
            }),
        );
        for &theta in &[0.4, std::f64::consts::FRAC_PI_4, 1.2, 2.3] {
            let ga = analytic.christoffel(0.0, &[theta, 0.7]).unwrap();
            let gf = fd.christoffel(0.0, &[theta, 0.7]).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(
                            (ga.get(k, i, j) - gf.get(k, i, j)).abs() < 1e-8,
                            "theta={theta} k={k} i={i} j={j}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dt_quadratic_form_examples() {
        let stat = MetricField::euclidean(2);
        let s = TangentState::new(0.5, vec![1.0, 2.0], vec![0.3, -0.4]);
        assert_relative_eq!(stat.dt_quadratic_form(&s).unwrap(), 0.0);

        let m = MetricField::conformal_exp(2);
        let s = TangentState::new(0.0, vec![0.0, 0.0], vec![1.0, 0.0]);
        assert_relative_eq!(m.dt_quadratic_form(&s).unwrap(), 2.0, epsilon = 1e-14);

        let m = MetricField::conformal_poly(1);
        let s = TangentState::new(1.0, vec![0.0], vec![2.0]);
        assert_relative_eq!(m.dt_quadratic_form(&s).unwrap(), 8.0, epsilon = 1e-12);
    }

    #[test]
    fn finite_difference_dt_converges_at_second_order() {
        // error(h) ~ C h^2, so halving the step shrinks it by about 4
        let analytic = MetricField::conformal_exp(1);
        let err_at_scale = |scale: f64| -> f64 {
            let fd = MetricField::new(
                ChartManifold::euclidean(1),
                "fd",
                Arc::new(|t: f64, _q: &[f64]| DMatrix::identity(1, 1) * (2.0 * t).exp()),
            )
            .with_fd_scale(scale);
            let got = fd.dt_matrix(0.3, &[0.0]).unwrap()[(0, 0)];
            let want = analytic.dt_matrix(0.3, &[0.0]).unwrap()[(0, 0)];
            (got - want).abs()
        };
        let ratio = err_at_scale(100.0) / err_at_scale(50.0);
        assert!((3.5..=4.5).contains(&ratio), "ratio = {ratio}");
    }

    #[test]
    fn custom_metric_from_expressions() {
        let m = MetricField::custom(
            ChartManifold::euclidean(1),
            &[vec!["exp(2*t)".to_string()]],
            Some(&[vec!["2*exp(2*t)".to_string()]]),
        )
        .unwrap();
        let s = TangentState::new(1.0, vec![0.0], vec![1.0]);
        assert_relative_eq!(m.norm(&s).unwrap(), std::f64::consts::E, epsilon = 1e-14);
        assert_relative_eq!(
            m.dt_quadratic_form(&s).unwrap(),
            2.0 * (2.0f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn catalog_lookup_validates_manifold() {
        assert!(MetricField::catalog("euclidean", &ChartManifold::euclidean(3)).is_ok());
        assert!(MetricField::catalog("sphere", &ChartManifold::sphere()).is_ok());
        assert!(MetricField::catalog("nope", &ChartManifold::euclidean(1)).is_err());
        assert!(MetricField::catalog("flat-torus", &ChartManifold::euclidean(1)).is_err());
    }

    #[test]
    fn torus_closed_distance_uses_minimal_image() {
        let m = MetricField::flat_torus(vec![2.0 * std::f64::consts::PI]);
        let d = m
            .closed_distance(0.0, &[0.1], &[2.0 * std::f64::consts::PI - 0.1])
            .unwrap();
        assert_relative_eq!(d, 0.2, epsilon = 1e-12);
    }
}
