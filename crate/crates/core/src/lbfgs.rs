//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The inverse-Hessian action is reconstructed from the last `memory`
//! curvature pairs `(s_k, y_k)` by the standard two-loop recursion:
//!
//! ```text
//!     q ← ∇f
//!     for k = newest..oldest:   α_k = ρ_k s_kᵀ q;   q ← q - α_k y_k
//!     r ← γ q                   with γ = s_newᵀ y_new / y_newᵀ y_new
//!     for k = oldest..newest:   β = ρ_k y_kᵀ r;     r ← r + (α_k - β) s_k
//!     direction = -r
//! ```
//!
//! Step lengths are chosen by a bracketing line search with cubic
//! interpolation that enforces the strong Wolfe conditions
//!
//! ```text
//!     f(x + α d) ≤ f(x) + c1 α ∇fᵀd        (sufficient decrease)
//!     |∇f(x + α d)ᵀ d| ≤ c2 |∇fᵀd|         (curvature)
//! ```
//!
//! Curvature pairs are only stored when `sᵀy` is safely positive, so the
//! reconstructed metric stays positive definite even on the non-smooth
//! hinge-penalty objectives this crate feeds it.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    /// Number of curvature pairs kept.
    pub memory: usize,
    pub max_iters: usize,
    /// Terminate once the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective-evaluation budget per line search.
    pub max_linesearch: usize,
    /// Record per-iteration step data in [`OptimResult::trace`].
    pub record_trace: bool,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            max_iters: 50,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_linesearch: 25,
            record_trace: false,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::config("lbfgs memory must be >= 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("lbfgs max_iters must be >= 1"));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol.is_finite()) {
            return Err(Error::config("lbfgs grad_tol must be positive"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::config("lbfgs constants must satisfy 0 < c1 < c2 < 1"));
        }
        if self.max_linesearch < 3 {
            return Err(Error::config("lbfgs max_linesearch must be >= 3"));
        }
        Ok(())
    }
}

/// One stored curvature pair with its precomputed `ρ = 1 / sᵀy`.
#[derive(Clone, Debug)]
pub struct CurvaturePair {
    pub s: DVector<f64>,
    pub y: DVector<f64>,
    pub rho: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIters,
    LineSearchFailure,
}

/// Step data recorded when [`LbfgsOptions::record_trace`] is set. The fields
/// are exactly the quantities entering the strong Wolfe conditions.
#[derive(Clone, Copy, Debug)]
pub struct StepTrace {
    pub alpha: f64,
    pub f_before: f64,
    pub f_after: f64,
    /// `∇f(x)ᵀ d` at the step's start point.
    pub dir_deriv_before: f64,
    /// `∇f(x + α d)ᵀ d` at the accepted point.
    pub dir_deriv_after: f64,
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<StepTrace>,
}

/// Quasi-Newton direction `-H ∇f` from the two-loop recursion. With an empty
/// history this is steepest descent.
pub fn two_loop_direction(grad: &DVector<f64>, history: &[CurvaturePair]) -> DVector<f64> {
    let mut q = grad.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let alpha = pair.rho * pair.s.dot(&q);
        q.axpy(-alpha, &pair.y, 1.0);
        alphas.push(alpha);
    }
    let gamma = history
        .last()
        .map(|p| p.s.dot(&p.y) / p.y.dot(&p.y))
        .unwrap_or(1.0);
    let mut r = q * gamma;
    for (pair, alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = pair.rho * pair.y.dot(&r);
        r.axpy(alpha - beta, &pair.s, 1.0);
    }
    -r
}

#[derive(Clone, Copy)]
struct LinePoint {
    alpha: f64,
    f: f64,
    /// Directional derivative `∇fᵀd`; NaN when the evaluation was non-finite.
    d: f64,
}

struct LineSearchResult {
    alpha: f64,
    x: DVector<f64>,
    f: f64,
    grad: DVector<f64>,
}

/// Minimum of the cubic Hermite interpolant through two line points,
/// safeguarded into `[lo, hi]`. Falls back to bisection when the data does
/// not admit a finite minimizer.
fn cubic_interpolate(x1: f64, f1: f64, g1: f64, x2: f64, f2: f64, g2: f64, lo: f64, hi: f64) -> f64 {
    let bisect = 0.5 * (lo + hi);
    if ![x1, f1, g1, x2, f2, g2].iter().all(|v| v.is_finite()) || x1 == x2 {
        return bisect;
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_square = d1 * d1 - g1 * g2;
    if d2_square < 0.0 {
        return bisect;
    }
    let d2 = d2_square.sqrt() * if x2 >= x1 { 1.0 } else { -1.0 };
    let min_pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2));
    if min_pos.is_finite() {
        min_pos.clamp(lo, hi)
    } else {
        bisect
    }
}

/// Evaluates the line function at `alpha`, spending one unit of budget.
fn probe<F>(
    eval: &mut F,
    x0: &DVector<f64>,
    dir: &DVector<f64>,
    alpha: f64,
    budget: &mut usize,
) -> Option<(LinePoint, DVector<f64>, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let x = x0 + dir * alpha;
    let (f, grad) = eval(&x);
    let d = if f.is_finite() { grad.dot(dir) } else { f64::NAN };
    Some((LinePoint { alpha, f, d }, x, grad))
}

/// Zoom phase: shrinks a bracket known to contain a strong-Wolfe point.
#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    eval: &mut F,
    x0: &DVector<f64>,
    f0: f64,
    d0: f64,
    dir: &DVector<f64>,
    opts: &LbfgsOptions,
    mut lo: LinePoint,
    mut hi: LinePoint,
    budget: &mut usize,
) -> Option<LineSearchResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    loop {
        let (a, b) = if lo.alpha < hi.alpha {
            (lo.alpha, hi.alpha)
        } else {
            (hi.alpha, lo.alpha)
        };
        let width = b - a;
        if !(width > 1e-14 * a.max(1.0)) {
            return None;
        }
        let guard = 0.1 * width;
        let alpha = cubic_interpolate(
            lo.alpha, lo.f, lo.d, hi.alpha, hi.f, hi.d, a + guard, b - guard,
        );
        let (pt, x, grad) = probe(eval, x0, dir, alpha, budget)?;
        if !pt.f.is_finite() || pt.f > f0 + opts.c1 * alpha * d0 || pt.f >= lo.f {
            hi = pt;
        } else {
            if pt.d.abs() <= -opts.c2 * d0 {
                return Some(LineSearchResult { alpha, x, f: pt.f, grad });
            }
            if pt.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = pt;
        }
    }
}

/// Strong-Wolfe line search (bracket + zoom). Opens its bracket at
/// `alpha0` and grows from there. Returns `None` when no acceptable step is
/// found within the evaluation budget.
fn strong_wolfe<F>(
    eval: &mut F,
    x0: &DVector<f64>,
    f0: f64,
    g0: &DVector<f64>,
    dir: &DVector<f64>,
    alpha0: f64,
    opts: &LbfgsOptions,
) -> Option<LineSearchResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let d0 = g0.dot(dir);
    if !(d0 < 0.0) {
        return None;
    }
    const ALPHA_MAX: f64 = 1e6;
    let mut budget = opts.max_linesearch;
    let mut prev = LinePoint { alpha: 0.0, f: f0, d: d0 };
    let mut alpha = alpha0;
    let mut first = true;
    loop {
        let (pt, x, grad) = probe(eval, x0, dir, alpha, &mut budget)?;
        if !pt.f.is_finite() || pt.f > f0 + opts.c1 * alpha * d0 || (!first && pt.f >= prev.f) {
            return zoom(eval, x0, f0, d0, dir, opts, prev, pt, &mut budget);
        }
        if pt.d.abs() <= -opts.c2 * d0 {
            // Acceptable, but possibly far from the one-dimensional minimum.
            // One interpolation probe sharpens the step — on (near-)quadratic
            // stretches it lands on the exact line minimum, which is what
            // lets the quasi-Newton metric rebuild curvature in finitely many
            // steps. Keep it only when it also satisfies strong Wolfe.
            if pt.d.abs() > 1e-3 * d0.abs() && budget > 0 {
                let refine = cubic_interpolate(
                    prev.alpha,
                    prev.f,
                    prev.d,
                    alpha,
                    pt.f,
                    pt.d,
                    prev.alpha + 0.05 * (alpha - prev.alpha),
                    4.0 * alpha,
                );
                if refine != alpha {
                    if let Some((rp, rx, rgrad)) = probe(eval, x0, dir, refine, &mut budget) {
                        if rp.f.is_finite()
                            && rp.f <= f0 + opts.c1 * refine * d0
                            && rp.f < pt.f
                            && rp.d.abs() <= -opts.c2 * d0
                        {
                            return Some(LineSearchResult {
                                alpha: refine,
                                x: rx,
                                f: rp.f,
                                grad: rgrad,
                            });
                        }
                    }
                }
            }
            return Some(LineSearchResult { alpha, x, f: pt.f, grad });
        }
        if pt.d >= 0.0 {
            return zoom(eval, x0, f0, d0, dir, opts, pt, prev, &mut budget);
        }
        if alpha >= ALPHA_MAX {
            return None;
        }
        prev = pt;
        alpha = (2.0 * alpha).min(ALPHA_MAX);
        first = false;
    }
}

/// Minimizes `f` from `x0`. `eval` returns the objective value and gradient
/// at a point.
///
/// Curvature history starts empty and is rebuilt from scratch on every call,
/// so successive warm-started solves do not leak stale curvature into each
/// other. A failed line search terminates the run and returns the best
/// iterate found so far, flagged via [`Termination::LineSearchFailure`]; the
/// objective value never rises along the accepted iterates.
pub fn minimize<F>(mut eval: F, x0: DVector<f64>, opts: &LbfgsOptions) -> Result<OptimResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    opts.validate()?;
    let (mut f, mut grad) = eval(&x0);
    if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical(
            "lbfgs",
            format!(
                "objective or gradient non-finite at the initial point (f = {f}, x[0..{}] = {:?})",
                x0.len().min(4),
                x0.iter().take(4).collect::<Vec<_>>()
            ),
        ));
    }

    let mut x = x0;
    let mut history: Vec<CurvaturePair> = Vec::with_capacity(opts.memory);
    let mut trace = Vec::new();

    let mut grad_norm = grad.norm();
    if grad_norm <= opts.grad_tol {
        return Ok(OptimResult {
            x,
            f,
            grad_norm,
            iterations: 0,
            termination: Termination::Converged,
            trace,
        });
    }

    for iter in 1..=opts.max_iters {
        let mut dir = two_loop_direction(&grad, &history);
        let descent = grad.dot(&dir);
        if !(descent < -1e-12 * grad_norm * dir.norm()) {
            // The reconstructed metric failed to produce a usable descent
            // direction (possible right after a hinge kink); restart from
            // steepest descent.
            history.clear();
            dir = -grad.clone();
        }

        // Without curvature history the direction is raw steepest descent,
        // whose natural scale is unknown; open the bracket at a unit-length
        // step so a steep objective cannot fling the first probe arbitrarily
        // far. Once pairs exist, the two-loop scaling makes α = 1 sensible.
        let alpha0 = if history.is_empty() {
            (1.0 / grad_norm).min(1.0)
        } else {
            1.0
        };
        let Some(step) = strong_wolfe(&mut eval, &x, f, &grad, &dir, alpha0, opts) else {
            return Ok(OptimResult {
                x,
                f,
                grad_norm,
                iterations: iter - 1,
                termination: Termination::LineSearchFailure,
                trace,
            });
        };

        if opts.record_trace {
            trace.push(StepTrace {
                alpha: step.alpha,
                f_before: f,
                f_after: step.f,
                dir_deriv_before: grad.dot(&dir),
                dir_deriv_after: step.grad.dot(&dir),
            });
        }

        let s = &step.x - &x;
        let y = &step.grad - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == opts.memory {
                history.remove(0);
            }
            history.push(CurvaturePair {
                rho: 1.0 / sy,
                s,
                y,
            });
        }

        x = step.x;
        f = step.f;
        grad = step.grad;
        grad_norm = grad.norm();
        if grad_norm <= opts.grad_tol {
            return Ok(OptimResult {
                x,
                f,
                grad_norm,
                iterations: iter,
                termination: Termination::Converged,
                trace,
            });
        }
    }

    Ok(OptimResult {
        x,
        f,
        grad_norm,
        iterations: opts.max_iters,
        termination: Termination::MaxIters,
        trace,
    })
}
