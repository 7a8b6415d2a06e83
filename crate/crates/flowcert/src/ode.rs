//! Embedded Dormand-Prince 5(4) integrator with step-size control.
//!
//! This is the shared low-level core: it knows nothing about charts,
//! metrics or energies. The right-hand side may refuse to evaluate
//! (returning `false`), which rejects the attempted step and shrinks it;
//! persistent refusal drives the step below the collapse floor and ends
//! the run with [`OdeOutcome::StepCollapse`]. Callers decide what a
//! collapse means.

use crate::error::{Error, Result};

/// Step-size floor: a run ends when the accepted step would drop below
/// `STEP_COLLAPSE_FLOOR * max(1, |t|)`.
pub const STEP_COLLAPSE_FLOOR: f64 = 1e-13;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const ORDER_EXPONENT: f64 = 0.2; // 1/5 for a 5th order accept path

// Dormand-Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th and 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Tolerances and limits for one integration run.
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size, e.g. to force dense sampling.
    pub max_step: Option<f64>,
    /// Hard cap on attempted steps; exceeding it is an error.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: None,
            max_steps: 10_000_000,
        }
    }
}

/// Why the integration loop returned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OdeOutcome {
    /// The requested end time was attained.
    Reached,
    /// The observer asked to stop after an accepted step.
    Stopped { t: f64 },
    /// The step size fell below the collapse floor; `t` is the last
    /// accepted time.
    StepCollapse { t: f64 },
}

/// Counters describing one integration run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OdeStats {
    pub accepted: usize,
    /// Steps rejected by the error estimate or a refused evaluation.
    pub rejected: usize,
    pub min_accepted_step: f64,
}

/// Observer verdict after each accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    Continue,
    Stop,
}

/// Integrate `y' = f(t, y)` from `t0` to `t1 > t0`.
///
/// `f` writes the derivative into its output slice and returns `false`
/// to refuse evaluation (outside its domain, non-finite inputs). The
/// observer runs after every accepted step with `(t, y, h_used)`.
pub fn integrate<F, O>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    observer: &mut O,
) -> Result<(OdeOutcome, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
    O: FnMut(f64, &[f64], f64) -> StepControl,
{
    assert!(t1 > t0, "integrate requires t1 > t0");
    assert!(opts.rtol > 0.0 && opts.atol > 0.0);
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    let mut stage_y = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut stats = OdeStats {
        min_accepted_step: f64::INFINITY,
        ..OdeStats::default()
    };

    if !eval_finite(f, t, &y, &mut k[0]) {
        return Err(Error::NonFiniteField {
            t,
            q: y[..n / 2.max(1)].to_vec(),
            v: y[n / 2.max(1)..].to_vec(),
        });
    }

    let mut h = initial_step(f, t, &y, &k[0].clone(), opts);
    let mut steps = 0usize;

    loop {
        if t >= t1 {
            return Ok((OdeOutcome::Reached, stats));
        }
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepBudgetExhausted {
                max_steps: opts.max_steps,
                t,
            });
        }

        if let Some(hm) = opts.max_step {
            h = h.min(hm);
        }
        let mut clipped = false;
        if t + h >= t1 {
            h = t1 - t;
            clipped = true;
        }
        if h < STEP_COLLAPSE_FLOOR * t.abs().max(1.0) {
            return Ok((OdeOutcome::StepCollapse { t }, stats));
        }

        // Stages 2..7; stage 1 is the FSAL derivative already in k[0].
        let mut rejected_by_rhs = false;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage_y[i] = y[i] + h * acc;
            }
            let (ks_left, ks_right) = k.split_at_mut(s);
            let _ = ks_left;
            if !eval_finite(f, t + C[s] * h, &stage_y, &mut ks_right[0]) {
                rejected_by_rhs = true;
                break;
            }
        }
        if rejected_by_rhs {
            stats.rejected += 1;
            h *= 0.5;
            continue;
        }

        // 5th order solution is the last stage combination (row 7 of A).
        for i in 0..n {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(6) {
                acc += A[6][j] * kj[i];
            }
            y_new[i] = y[i] + h * acc;
        }
        if !y_new.iter().all(|x| x.is_finite()) {
            stats.rejected += 1;
            h *= 0.5;
            continue;
        }

        // Weighted RMS error of the embedded 4th order difference.
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += E[j] * kj[i];
            }
            e *= h;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            err_sq += r * r;
        }
        let err = (err_sq / n as f64).sqrt();

        if err <= 1.0 {
            let h_used = h;
            t = if clipped { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL: last stage derivative becomes stage 1
            stats.accepted += 1;
            stats.min_accepted_step = stats.min_accepted_step.min(h_used);
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-ORDER_EXPONENT)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h = h_used * factor;
            if let StepControl::Stop = observer(t, &y, h_used) {
                return Ok((OdeOutcome::Stopped { t }, stats));
            }
        } else {
            stats.rejected += 1;
            let factor = (SAFETY * err.powf(-ORDER_EXPONENT)).clamp(MIN_FACTOR, 1.0);
            h *= factor;
        }
    }
}

fn eval_finite<F>(f: &mut F, t: f64, y: &[f64], out: &mut [f64]) -> bool
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    if !y.iter().all(|x| x.is_finite()) {
        return false;
    }
    f(t, y, out) && out.iter().all(|x| x.is_finite())
}

/// Step-size guess from the derivative scale at the start point.
fn initial_step<F>(f: &mut F, t0: f64, y0: &[f64], f0: &[f64], opts: &OdeOptions) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]) -> bool,
{
    let n = y0.len();
    let scale = |y: &[f64], i: usize| opts.atol + opts.rtol * y[i].abs();
    let d0 = (y0
        .iter()
        .enumerate()
        .map(|(i, &x)| (x / scale(y0, i)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let d1 = (f0
        .iter()
        .enumerate()
        .map(|(i, &x)| (x / scale(y0, i)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };

    // one explicit Euler probe to estimate the second derivative
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(&y, &d)| y + h0 * d).collect();
    let mut f1 = vec![0.0; n];
    let h = if eval_finite(f, t0 + h0, &y1, &mut f1) {
        let d2 = (f1
            .iter()
            .zip(f0)
            .enumerate()
            .map(|(i, (&a, &b))| ((a - b) / scale(y0, i)).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let dm = d1.max(d2);
        if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / dm).powf(ORDER_EXPONENT)
        }
    } else {
        h0 * 1e-3
    };
    let h = (100.0 * h0).min(h);
    match opts.max_step {
        Some(hm) => h.min(hm),
        None => h,
    }
}
