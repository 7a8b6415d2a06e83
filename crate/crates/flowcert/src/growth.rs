//! Growth functions and the comparison envelope.
//!
//! A growth function `g` is nondecreasing with `g(1) >= 1`; the families
//! here are a constant `c >= 1`, `ln(eta + x)` and
//! `ln(eta + x) * ln(eta + ln(eta + x))` with `eta = e - 1`, so that both
//! logarithmic families take the value 1 at `x = 1`.
//!
//! The comparison machinery works through
//! `G(y) = integral_1^y dx / (x g(x))`: a differential inequality
//! `E' <= beta E g(E)` confines `E(t)` below the envelope
//! `G^{-1}(G(E_0) + beta |t - t_0|)`. `G` is computed by adaptive
//! quadrature after the substitution `u = ln x`, and inverted by a
//! bracketed Newton iteration; the constant family is deliberately pushed
//! through the same numeric path so that its closed form
//! `E_0 exp(c beta dt)` remains an independent cross-check.
//!
//! ```
//! use flowcert::growth::GrowthFunction;
//!
//! let g = GrowthFunction::constant(2.0).unwrap();
//! let env = g.envelope(3.0, 1.0, 0.0, 0.5).unwrap();
//! assert!((env - 3.0 * f64::exp(2.0 * 0.5)).abs() / env < 1e-8);
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset making `ln(eta + 1) = 1`.
pub const ETA: f64 = std::f64::consts::E - 1.0;

/// Absolute tolerance for the quadrature behind `G`.
pub const QUADRATURE_TOL: f64 = 1e-12;
/// The inverse satisfies `|G(G_inv(z)) - z| <= INVERSION_TOL`.
pub const INVERSION_TOL: f64 = 1e-10;
/// Bracket expansion gives up past this argument.
const BRACKET_CEILING: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GrowthFunction {
    Constant { c: f64 },
    Log,
    LogLog,
}

impl GrowthFunction {
    /// Constant growth `g = c`; requires `c >= 1`.
    pub fn constant(c: f64) -> Result<Self> {
        let g = GrowthFunction::Constant { c };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if let GrowthFunction::Constant { c } = self {
            if !(c.is_finite() && *c >= 1.0) {
                return Err(Error::OutOfDomain {
                    value: *c,
                    domain: "constant growth requires c >= 1".into(),
                });
            }
        }
        Ok(())
    }

    /// Evaluate `g(x)` for `x >= 0`.
    pub fn g(&self, x: f64) -> f64 {
        debug_assert!(x >= 0.0, "growth functions are evaluated on x >= 0");
        match self {
            GrowthFunction::Constant { c } => *c,
            GrowthFunction::Log => (ETA + x).ln(),
            GrowthFunction::LogLog => {
                let inner = (ETA + x).ln();
                inner * (ETA + inner).ln()
            }
        }
    }

    /// `G(y) = integral_1^y dx / (x g(x))` for `y >= 1`.
    pub fn big_g(&self, y: f64) -> Result<f64> {
        if !(y.is_finite() && y >= 1.0 - 1e-9) {
            return Err(Error::OutOfDomain {
                value: y,
                domain: "big_g requires y >= 1".into(),
            });
        }
        let y = y.max(1.0);
        // u = ln x turns the integral into int_0^{ln y} du / g(e^u)
        let upper = y.ln();
        let f = |u: f64| 1.0 / self.g(u.exp());
        Ok(adaptive_simpson(&f, 0.0, upper, QUADRATURE_TOL))
    }

    /// Solve `G(y) = z` for `y >= 1`, `z >= 0`, to `INVERSION_TOL`.
    ///
    /// The bracket grows geometrically; for slowly diverging `G` (the
    /// doubly logarithmic family) large `z` exhausts the representable
    /// range and the error reports how far the bracket got.
    pub fn big_g_inv(&self, z: f64) -> Result<f64> {
        if !(z.is_finite() && z >= 0.0) {
            return Err(Error::OutOfDomain {
                value: z,
                domain: "big_g_inv requires z >= 0".into(),
            });
        }
        if z == 0.0 {
            return Ok(1.0);
        }
        let mut lo = 1.0f64;
        let mut hi = 10.0f64;
        let mut g_hi = self.big_g(hi)?;
        while g_hi < z {
            lo = hi;
            hi *= 10.0;
            if hi > BRACKET_CEILING {
                return Err(Error::InversionOutOfRange {
                    target: z,
                    attained_x: lo,
                    attained_value: self.big_g(lo)?,
                });
            }
            g_hi = self.big_g(hi)?;
        }

        // Newton on G(y) - z with G'(y) = 1 / (y g(y)), safeguarded by
        // log-midpoint bisection whenever the step leaves the bracket.
        let mut y = (lo * hi).sqrt();
        for _ in 0..200 {
            let gy = self.big_g(y)?;
            let err = gy - z;
            if err.abs() <= INVERSION_TOL {
                return Ok(y);
            }
            if err > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let newton = y - err * y * self.g(y);
            y = if newton > lo && newton < hi {
                newton
            } else {
                (lo * hi).sqrt()
            };
        }
        Err(Error::InversionOutOfRange {
            target: z,
            attained_x: y,
            attained_value: self.big_g(y)?,
        })
    }

    /// Envelope `G^{-1}(G(e0) + beta |t - t0|)` bounding any `E` with
    /// `E(t0) = e0` and `|E'| <= beta E g(E)`.
    pub fn envelope(&self, e0: f64, beta: f64, t0: f64, t: f64) -> Result<f64> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::OutOfDomain {
                value: beta,
                domain: "envelope requires beta >= 0".into(),
            });
        }
        let z = self.big_g(e0)? + beta * (t - t0).abs();
        self.big_g_inv(z)
    }
}

/// The two-variable expression controlling second-order energy growth:
/// with `E = 1 + x^2 + y^2`,
/// `omega = [xy + x^2 g(1+x^2) + E (y/(K+y)) g(E) + g(1+x^2) y^2] / (E g(E))`.
///
/// `beta = sup 2 omega` feeds the envelope; for the families here the
/// supremum stays below 6 (constant growth approaches 5).
pub fn omega(g: &GrowthFunction, k: f64, x: f64, y: f64) -> f64 {
    let e = 1.0 + x * x + y * y;
    let g_x = g.g(1.0 + x * x);
    let g_e = g.g(e);
    (x * y + x * x * g_x + e * (y / (k + y)) * g_e + g_x * y * y) / (e * g_e)
}

/// Grid estimate of `sup 2 omega` over `x, y >= 0`; the grid covers the
/// axes and a wide logarithmic range, which is where the ratio peaks.
pub fn omega_twice_supremum(g: &GrowthFunction, k: f64) -> f64 {
    let mut pts = vec![0.0];
    let n = 160;
    for i in 0..=n {
        let exp = -3.0 + 7.0 * i as f64 / n as f64;
        pts.push(10f64.powf(exp));
    }
    let mut sup = 0.0f64;
    for &x in &pts {
        for &y in &pts {
            sup = sup.max(2.0 * omega(g, k, x, y));
        }
    }
    sup
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E;

    #[test]
    fn all_families_are_one_at_one_except_scaled_constants() {
        assert_eq!(GrowthFunction::constant(1.0).unwrap().g(1.0), 1.0);
        assert_eq!(GrowthFunction::constant(3.5).unwrap().g(1.0), 3.5);
        assert_relative_eq!(GrowthFunction::Log.g(1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(GrowthFunction::LogLog.g(1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn constants_below_one_are_rejected() {
        assert!(GrowthFunction::constant(0.5).is_err());
        assert!(GrowthFunction::constant(f64::NAN).is_err());
    }

    #[test]
    fn big_g_anchors() {
        let c2 = GrowthFunction::constant(2.0).unwrap();
        assert_relative_eq!(c2.big_g(1.0).unwrap(), 0.0);
        assert_relative_eq!(c2.big_g(E * E).unwrap(), 1.0, epsilon = 1e-11);

        // reference quadrature values for the logarithmic families
        let log = GrowthFunction::Log;
        assert_relative_eq!(log.big_g(E).unwrap(), 0.8277260176504116, epsilon = 1e-10);
        assert_relative_eq!(log.big_g(10.0).unwrap(), 1.5102089471776852, epsilon = 1e-10);
        let ll = GrowthFunction::LogLog;
        assert_relative_eq!(ll.big_g(100.0).unwrap(), 1.7241182608351054, epsilon = 1e-10);
    }

    #[test]
    fn inverse_hits_the_reference_root() {
        let log = GrowthFunction::Log;
        assert_relative_eq!(
            log.big_g_inv(1.0).unwrap(),
            3.5651097632617705,
            epsilon = 1e-9
        );
    }

    #[test]
    fn inverse_round_trips_within_tolerance() {
        for g in [
            GrowthFunction::constant(1.0).unwrap(),
            GrowthFunction::constant(2.0).unwrap(),
            GrowthFunction::Log,
        ] {
            for i in 0..=12 {
                let z = 0.25 * i as f64;
                let y = g.big_g_inv(z).unwrap();
                assert!(
                    (g.big_g(y).unwrap() - z).abs() <= INVERSION_TOL,
                    "{g:?} z={z}"
                );
            }
        }
    }

    #[test]
    fn constant_envelope_matches_the_exponential_closed_form() {
        let g = GrowthFunction::constant(2.0).unwrap();
        for &(e0, beta, dt) in &[(1.0, 1.0, 0.5), (5.0, 6.0, 1.0), (10.0, 6.0, 3.0)] {
            let env = g.envelope(e0, beta, 0.0, dt).unwrap();
            let closed = e0 * (2.0 * beta * dt).exp();
            assert_relative_eq!(env, closed, max_relative = 1e-8);
        }
    }

    #[test]
    fn envelope_solves_the_saturated_comparison_ode() {
        // E' = beta E g(E) integrates exactly onto the envelope
        use crate::ode::{integrate, OdeOptions, StepControl};
        let g = GrowthFunction::Log;
        let beta = 1.5;
        let mut last = [2.0];
        integrate(
            &mut |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = beta * y[0] * g.g(y[0]);
                true
            },
            0.0,
            &[2.0],
            1.0,
            &OdeOptions::default(),
            &mut |_t, y: &[f64], _h| {
                last[0] = y[0];
                StepControl::Continue
            },
        )
        .unwrap();
        let env = g.envelope(2.0, beta, 0.0, 1.0).unwrap();
        assert_relative_eq!(last[0], env, max_relative = 1e-7);
    }

    #[test]
    fn doubly_log_inverse_exhausts_honestly() {
        let err = GrowthFunction::LogLog.big_g_inv(5.0).unwrap_err();
        match err {
            Error::InversionOutOfRange {
                target,
                attained_x,
                attained_value,
            } => {
                assert_eq!(target, 5.0);
                assert!(attained_x > 1e200);
                assert!(attained_value < 5.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn envelope_is_monotone_in_everything() {
        let g = GrowthFunction::Log;
        let base = g.envelope(2.0, 1.0, 0.0, 1.0).unwrap();
        assert!(g.envelope(3.0, 1.0, 0.0, 1.0).unwrap() > base);
        assert!(g.envelope(2.0, 2.0, 0.0, 1.0).unwrap() > base);
        assert!(g.envelope(2.0, 1.0, 0.0, 2.0).unwrap() > base);
        // time reversal: the bound depends on |t - t0|
        assert_relative_eq!(g.envelope(2.0, 1.0, 0.0, -1.0).unwrap(), base);
    }

    #[test]
    fn omega_supremum_justifies_the_default_rate() {
        let c1 = GrowthFunction::constant(1.0).unwrap();
        let sup_c = omega_twice_supremum(&c1, 1.0);
        assert!(sup_c <= 6.0, "constant: {sup_c}");
        assert!(sup_c > 4.5, "the constant-family supremum approaches 5");
        let sup_log = omega_twice_supremum(&GrowthFunction::Log, 1.0);
        assert!(sup_log <= 6.0, "log: {sup_log}");
    }
}
