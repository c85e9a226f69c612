//! Small dense quadratic programs: minimize `‖u − u_ref‖²` subject to linear
//! inequalities `aᵀu ≥ b` and per-channel box bounds.
//!
//! The safety filter solves one of these per control step, with one or two
//! decision variables and a handful of constraints. At that size an exact
//! active-set enumeration beats iterative QP methods: every candidate active
//! set is solved in closed form, the best feasible candidate is returned, and
//! the output is deterministic — no iteration counts, no warm-start state.

use nalgebra::{DMatrix, DVector};

/// Relative feasibility slack used while screening candidates. The public
/// guarantee is satisfaction within 1e-9; the internal screen is tighter so
/// the final box clamp cannot push a constraint past the public tolerance.
const FEAS_TOL: f64 = 1e-10;

/// Rows with coefficient norm at or below this are treated as having no
/// control authority: vacuous when the right-hand side is already met,
/// otherwise unsatisfiable.
const ZERO_ROW_TOL: f64 = 1e-14;

/// Least-distance projection problem with inequality and box constraints.
#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Reference control; the objective is squared distance to this point.
    pub u_ref: DVector<f64>,
    /// Halfspace constraints `aᵀu ≥ b`.
    pub ineqs: Vec<(DVector<f64>, f64)>,
    /// Per-channel `[lo, hi]` bounds; use `±INFINITY` for unbounded channels.
    pub bounds: Vec<(f64, f64)>,
}

impl QpProblem {
    /// Problem with no constraints at all on `u_ref.len()` channels.
    pub fn new(u_ref: DVector<f64>) -> Self {
        let dim = u_ref.len();
        QpProblem {
            u_ref,
            ineqs: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
        }
    }

    /// Adds the halfspace `aᵀu ≥ b`.
    pub fn with_ineq(mut self, a: DVector<f64>, b: f64) -> Self {
        self.ineqs.push((a, b));
        self
    }

    /// Sets the box bound on one channel.
    pub fn with_bound(mut self, channel: usize, lo: f64, hi: f64) -> Self {
        self.bounds[channel] = (lo, hi);
        self
    }
}

/// Outcome classification for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    /// A feasible minimizer was found.
    Optimal,
    /// No candidate satisfied every constraint; `u_star` holds the clamped
    /// reference and the caller decides the fallback.
    Infeasible,
}

/// Solution record for [`solve`].
///
/// `active_set` lists the tight constraints at `u_star` using stable row
/// indices: inequality `k` is row `k`; the lower/upper bound of channel `i`
/// are rows `n_ineq + 2i` and `n_ineq + 2i + 1`.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub u_star: DVector<f64>,
    pub active_set: Vec<usize>,
    pub status: QpStatus,
}

/// Closed-form projection of `u_ref` onto the halfspace `aᵀu ≥ b`.
///
/// Requires `a ≠ 0`. Returns `u_ref` untouched when it already satisfies the
/// constraint; otherwise moves along `a` to the boundary.
pub fn solve_single_halfspace(u_ref: &DVector<f64>, a: &DVector<f64>, b: f64) -> DVector<f64> {
    let slack = a.dot(u_ref) - b;
    if slack >= 0.0 {
        return u_ref.clone();
    }
    u_ref - a * (slack / a.norm_squared())
}

/// One materialized constraint row `aᵀu ≥ b` with its stable index.
struct Row {
    a: DVector<f64>,
    b: f64,
    id: usize,
}

fn row_tol(b: f64) -> f64 {
    FEAS_TOL * (1.0 + b.abs())
}

fn is_feasible(u: &DVector<f64>, rows: &[Row]) -> bool {
    rows.iter().all(|r| r.a.dot(u) >= r.b - row_tol(r.b))
}

fn clamp_to_box(u: &mut DVector<f64>, bounds: &[(f64, f64)]) {
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        u[i] = u[i].max(lo).min(hi);
    }
}

/// Visits index combinations of `n` items taken `k` at a time in
/// lexicographic order, stopping early if the callback returns `false`.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        if !visit(&idx) {
            return;
        }
        // Advance the rightmost index that still has room.
        let mut pos = k;
        while pos > 0 {
            pos -= 1;
            if idx[pos] + (k - pos) < n {
                idx[pos] += 1;
                for j in pos + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return;
            }
        }
        if k == 0 {
            return;
        }
    }
}

/// Exact minimizer of `‖u − u_ref‖²` over the problem's constraint set.
///
/// Enumerates candidate active sets in order of cardinality and then
/// lexicographic row index, solves each equality-constrained projection in
/// closed form, and keeps the best feasible candidate; the enumeration order
/// breaks objective ties, so the result is deterministic. Never panics:
/// an empty feasible set is reported through [`QpStatus::Infeasible`].
pub fn solve(p: &QpProblem) -> QpSolution {
    let dim = p.u_ref.len();
    let n_ineq = p.ineqs.len();

    let mut rows: Vec<Row> = Vec::with_capacity(n_ineq + 2 * dim);
    for (k, (a, b)) in p.ineqs.iter().enumerate() {
        if a.norm() <= ZERO_ROW_TOL {
            if *b <= row_tol(*b) {
                continue; // no control authority needed — drop the row
            }
            let mut u = p.u_ref.clone();
            clamp_to_box(&mut u, &p.bounds);
            return QpSolution {
                u_star: u,
                active_set: Vec::new(),
                status: QpStatus::Infeasible,
            };
        }
        rows.push(Row {
            a: a.clone(),
            b: *b,
            id: k,
        });
    }
    for (i, &(lo, hi)) in p.bounds.iter().enumerate() {
        if lo.is_finite() {
            let mut a = DVector::zeros(dim);
            a[i] = 1.0;
            rows.push(Row {
                a,
                b: lo,
                id: n_ineq + 2 * i,
            });
        }
        if hi.is_finite() {
            let mut a = DVector::zeros(dim);
            a[i] = -1.0;
            rows.push(Row {
                a,
                b: -hi,
                id: n_ineq + 2 * i + 1,
            });
        }
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for k in 0..=dim.min(rows.len()) {
        for_each_combination(rows.len(), k, |subset| {
            if let Some(u) = project_onto_tight_rows(&p.u_ref, &rows, subset) {
                if is_feasible(&u, &rows) {
                    let obj = (&u - &p.u_ref).norm_squared();
                    let better = match &best {
                        None => true,
                        Some((best_obj, _)) => obj + 1e-12 < *best_obj,
                    };
                    if better {
                        best = Some((obj, u));
                    }
                }
            }
            true
        });
    }

    match best {
        Some((_, mut u)) => {
            clamp_to_box(&mut u, &p.bounds);
            let active_set = rows
                .iter()
                .filter(|r| (r.a.dot(&u) - r.b).abs() <= 1e-9 * (1.0 + r.b.abs()))
                .map(|r| r.id)
                .collect();
            QpSolution {
                u_star: u,
                active_set,
                status: QpStatus::Optimal,
            }
        }
        None => {
            let mut u = p.u_ref.clone();
            clamp_to_box(&mut u, &p.bounds);
            QpSolution {
                u_star: u,
                active_set: Vec::new(),
                status: QpStatus::Infeasible,
            }
        }
    }
}

/// Projection of `u_ref` onto the affine set where the selected rows hold
/// with equality: `u = u_ref + Aᵀ(AAᵀ)⁻¹(b − A u_ref)`. Returns `None` when
/// the selected rows are linearly dependent.
fn project_onto_tight_rows(
    u_ref: &DVector<f64>,
    rows: &[Row],
    subset: &[usize],
) -> Option<DVector<f64>> {
    let k = subset.len();
    if k == 0 {
        return Some(u_ref.clone());
    }
    let dim = u_ref.len();
    let mut a = DMatrix::zeros(k, dim);
    let mut rhs = DVector::zeros(k);
    for (r, &idx) in subset.iter().enumerate() {
        for c in 0..dim {
            a[(r, c)] = rows[idx].a[c];
        }
        rhs[r] = rows[idx].b - rows[idx].a.dot(u_ref);
    }
    let gram = &a * a.transpose();
    let mu = gram.clone().lu().solve(&rhs)?;
    if (&gram * &mu - &rhs).norm() > 1e-8 * (1.0 + rhs.norm()) {
        return None; // numerically singular active set
    }
    Some(u_ref + a.transpose() * mu)
}
