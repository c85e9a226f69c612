//! Hard safety stage: high-order control-barrier-function constraints and the
//! quadratic-program filter built on them.
//!
//! Both plants keep a scalar clearance `l(x)` positive (obstacle distance for
//! the car, wall distance for the quadrotor), but the control does not act on
//! `l` directly. The barrier chain fixes that by differentiating: each
//! application of `(d/dt + α)` trades one integrator for a rate condition,
//! stopping as soon as the control appears.
//!
//! * Car: the squared clearance `h₀ = x_r² + y_r² − r²` has relative degree
//!   two in the turn rate, so one lift `h = ḣ₀ + αh₀` makes `ḣ` control-affine
//!   and the condition `ḣ + γh ≥ 0` is linear in `u`.
//! * Quadrotor: each wall distance has relative degree three in thrust
//!   (position → velocity → acceleration), so `(d/dt + α)³` applied to the
//!   wall clearance yields a condition linear in `F`. Torque never appears —
//!   attitude influences position only from the fourth derivative on — which
//!   is why the four wall constraints are handled as a prioritized chain of
//!   single-constraint programs rather than one joint program.
//!
//! Between samples the thrust is held constant (zero-order hold), so its time
//! derivative contributes nothing to the chain.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::qp::{self, QpProblem, QpStatus};
use crate::systems::{quad_wall_margins, Obstacle, QuadrotorParams, SystemConfig};

/// Barrier-chain gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbfParams {
    /// Chain rate `α` (1/s): how aggressively clearance may be consumed.
    pub alpha: f64,
    /// Gain `γ` of the linear class-K term `κ(h) = γh` in the final
    /// condition `ḣ + γh ≥ 0`.
    pub gamma: f64,
}

impl CbfParams {
    /// Default gains for the car. The decay rate γ doubles as the recovery
    /// gain once the barrier condition has been breached (the required
    /// restoration rate is proportional to γ·|h|), so it is set high enough
    /// that a shallow-angle graze started inside the margin band is pushed
    /// back out within a step or two.
    pub fn dubins_default() -> Self {
        CbfParams {
            alpha: 1.5,
            gamma: 2.0,
        }
    }

    /// Default gains for the quadrotor. `α` must satisfy the hover
    /// feasibility bound `α² w ≥ 3g` (≈ 5.72 for the default room), otherwise
    /// the floor condition is unsatisfiable with horizontal thrust; staying
    /// close to that bound keeps the filter acting as early as the bound
    /// allows, which is where it rescues the most marginal spawns.
    pub fn quadrotor_default() -> Self {
        CbfParams {
            alpha: 5.8,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("cbf alpha must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("cbf gamma must be positive"));
        }
        Ok(())
    }
}

/// One barrier condition in control-affine form `aᵀu ≥ b`.
#[derive(Debug, Clone)]
pub struct LinearCbfConstraint {
    pub a: DVector<f64>,
    pub b: f64,
    /// Index into [`SystemConfig::barrier_labels`] naming the physical
    /// constraint (obstacle number or wall).
    pub label: usize,
    /// Current clearance used to prioritize constraints (smaller = closer).
    pub margin: f64,
}

impl LinearCbfConstraint {
    /// Constraint slack `aᵀu − b` at a given control; nonnegative iff the
    /// condition holds.
    pub fn slack(&self, u: &DVector<f64>) -> f64 {
        self.a.dot(u) - self.b
    }
}

/// Barrier condition keeping the car outside one circular obstacle.
///
/// With obstacle-relative position `(x_r, y_r)` and squared-distance
/// clearance `h₀ = x_r² + y_r² − r²`, the lifted barrier is
///
/// ```text
///     h    = 2 x_r v cos θ + 2 y_r v sin θ + α (x_r² + y_r² − r²)
///     L_f h = 2v² + 2αv (x_r cos θ + y_r sin θ)
///     L_g h = 2v (y_r cos θ − x_r sin θ)
/// ```
///
/// and the emitted halfspace is `L_g h · u ≥ −L_f h − γ h`. `L_g h` vanishes
/// exactly when the heading is radial to the obstacle; the zero-coefficient
/// row is then vacuous or unsatisfiable depending on the right-hand side and
/// the QP layer resolves which.
pub fn dubins_obstacle_constraint(
    x: &DVector<f64>,
    obstacle: &Obstacle,
    speed: f64,
    p: &CbfParams,
    label: usize,
) -> LinearCbfConstraint {
    let (xr, yr) = (x[0] - obstacle.x, x[1] - obstacle.y);
    let (sin_t, cos_t) = x[2].sin_cos();
    let v = speed;
    let h = 2.0 * xr * v * cos_t + 2.0 * yr * v * sin_t
        + p.alpha * (xr * xr + yr * yr - obstacle.radius * obstacle.radius);
    let lf_h = 2.0 * v * v + 2.0 * p.alpha * v * (xr * cos_t + yr * sin_t);
    let lg_h = 2.0 * v * (yr * cos_t - xr * sin_t);
    LinearCbfConstraint {
        a: DVector::from_vec(vec![lg_h]),
        b: -lf_h - p.gamma * h,
        label,
        margin: (xr * xr + yr * yr).sqrt() - obstacle.radius,
    }
}

/// The four wall conditions for the quadrotor, in label order
/// (ceiling, floor, right, left).
///
/// Each wall clearance is `ψ = w − s·q` with `s = ±1` and `q ∈ {z, x}`;
/// expanding `(d/dt + α)³ ψ ≥ 0` with the zero-order-hold assumption
/// (`Ḟ = 0` between samples) gives
///
/// ```text
///     −s q⃛ − 3αs q̈ − 3α²s q̇ + α³(w − s q) ≥ 0
/// ```
///
/// where for vertical walls `q̈ = F sin θ / m − g`, `q⃛ = F ω cos θ / m` and
/// for lateral walls `q̈ = F cos θ / m`, `q⃛ = −F ω sin θ / m`. Collecting the
/// thrust terms yields a condition linear in `F` with zero coefficient on the
/// torque channel.
pub fn quad_wall_constraints(
    x: &DVector<f64>,
    quad: &QuadrotorParams,
    p: &CbfParams,
) -> Vec<LinearCbfConstraint> {
    let w = quad.room_half_extent;
    let m = quad.mass;
    let grav = quad.gravity;
    let alpha = p.alpha;
    let (sin_t, cos_t) = x[2].sin_cos();
    let omega = x[5];
    let margins = quad_wall_margins(x, quad);

    // (sign s, clearance coordinate q, its rate, F-coefficients of q̈ / q⃛,
    // constant part of q̈)
    let walls = [
        (1.0, x[1], x[4], sin_t / m, omega * cos_t / m, -grav), // ceiling: w − z
        (-1.0, x[1], x[4], sin_t / m, omega * cos_t / m, -grav), // floor: w + z
        (1.0, x[0], x[3], cos_t / m, -omega * sin_t / m, 0.0),  // right: w − x
        (-1.0, x[0], x[3], cos_t / m, -omega * sin_t / m, 0.0), // left: w + x
    ];

    walls
        .iter()
        .enumerate()
        .map(|(label, &(s, q, q_dot, acc_f, jerk_f, acc_0))| {
            let coef_f = -s * (jerk_f + 3.0 * alpha * acc_f);
            let constant = -s * 3.0 * alpha * acc_0
                - 3.0 * alpha * alpha * s * q_dot
                + alpha.powi(3) * (w - s * q);
            LinearCbfConstraint {
                a: DVector::from_vec(vec![coef_f, 0.0]),
                b: -constant,
                label,
                margin: margins[label],
            }
        })
        .collect()
}

/// Priority ranking for the prioritized chain: ascending clearance (closest
/// wall = highest priority), ties broken by label order so runs are
/// deterministic. The chain applies programs in *reverse* of this ranking so
/// the highest-priority wall acts last and cannot be overwritten.
pub fn chain_order(constraints: &[LinearCbfConstraint]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..constraints.len()).collect();
    order.sort_by(|&i, &j| {
        constraints[i]
            .margin
            .partial_cmp(&constraints[j].margin)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(constraints[i].label.cmp(&constraints[j].label))
    });
    order
}

/// Result of one filter application.
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub u: DVector<f64>,
    /// True when some program in this step had an empty feasible set and the
    /// projection-and-clamp fallback was used instead.
    pub infeasible: bool,
}

/// Minimally edits `u_ref` to satisfy the supplied barrier conditions inside
/// the control box.
///
/// When the joint program is infeasible the filter degrades gracefully: it
/// projects onto the single most-violated condition with nonzero control
/// authority (distance-scaled), clamps to the box, and flags the step.
pub fn filter(
    u_ref: &DVector<f64>,
    constraints: &[LinearCbfConstraint],
    bounds: &[(f64, f64)],
) -> FilterOutcome {
    let mut problem = QpProblem::new(u_ref.clone());
    problem.bounds = bounds.to_vec();
    for c in constraints {
        problem = problem.with_ineq(c.a.clone(), c.b);
    }
    let sol = qp::solve(&problem);
    if sol.status == QpStatus::Optimal {
        return FilterOutcome {
            u: sol.u_star,
            infeasible: false,
        };
    }

    let worst = constraints
        .iter()
        .filter(|c| c.a.norm() > 1e-12)
        .map(|c| (c, (c.b - c.a.dot(u_ref)) / c.a.norm()))
        .filter(|(_, violation)| *violation > 0.0)
        .max_by(|(_, v1), (_, v2)| v1.partial_cmp(v2).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = match worst {
        Some((c, _)) => qp::solve_single_halfspace(u_ref, &c.a, c.b),
        None => u_ref.clone(),
    };
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        u[i] = u[i].max(lo).min(hi);
    }
    FilterOutcome {
        u,
        infeasible: true,
    }
}

/// Prioritized wall filter for the quadrotor.
///
/// Because every wall condition constrains only the thrust channel, a joint
/// program over all four is frequently over-determined; instead each wall
/// gets its own single-constraint program, fed in a chain where every
/// program receives the previous one's output as its reference. The chain
/// runs lowest priority (farthest wall) first, so the closest wall acts last
/// and has the binding say. A program with an empty feasible set is skipped
/// rather than applied — a hopeless far wall must not overwrite corrections
/// for an imminent one — except the closest wall's, which falls back to the
/// least-violating clamped projection (maximum effort against the most
/// urgent boundary). Inactive links are identity maps, so distant walls
/// never perturb the control.
pub fn prioritized_filter(
    x: &DVector<f64>,
    u_mpc: &DVector<f64>,
    quad: &QuadrotorParams,
    p: &CbfParams,
    bounds: &[(f64, f64)],
) -> FilterOutcome {
    let constraints = quad_wall_constraints(x, quad, p);
    let priority = chain_order(&constraints);
    let mut u = u_mpc.clone();
    let mut infeasible = false;
    for (rank, &idx) in priority.iter().enumerate().rev() {
        let out = filter(&u, &constraints[idx..idx + 1], bounds);
        if out.infeasible {
            infeasible = true;
            if rank == 0 {
                u = out.u;
            }
        } else {
            u = out.u;
        }
    }
    FilterOutcome { u, infeasible }
}

/// Diagnostics for one filtered control step.
#[derive(Debug, Clone)]
pub struct FilterStep {
    /// The control to apply.
    pub u: DVector<f64>,
    /// Slack `aᵀu − b` of every labeled barrier condition at the emitted
    /// control, in [`SystemConfig::barrier_labels`] order. For the quadrotor
    /// chain only the closest wall's program is guaranteed nonnegative.
    pub slacks: Vec<f64>,
    pub infeasible: bool,
}

/// System-aware safety stage: builds the right constraint set per plant and
/// applies the matching filter policy.
#[derive(Debug, Clone)]
pub struct SafetyFilter {
    system: SystemConfig,
    params: CbfParams,
    bounds: Vec<(f64, f64)>,
}

impl SafetyFilter {
    pub fn new(system: SystemConfig, params: CbfParams) -> Result<Self> {
        system.validate()?;
        params.validate()?;
        let bounds = system.control_bounds();
        Ok(SafetyFilter {
            system,
            params,
            bounds,
        })
    }

    pub fn params(&self) -> &CbfParams {
        &self.params
    }

    /// The barrier conditions evaluated at `x`, in label order.
    pub fn constraints_at(&self, x: &DVector<f64>) -> Vec<LinearCbfConstraint> {
        match &self.system {
            SystemConfig::Dubins(p) => p
                .obstacles
                .iter()
                .enumerate()
                .map(|(i, ob)| dubins_obstacle_constraint(x, ob, p.speed, &self.params, i))
                .collect(),
            SystemConfig::Quadrotor(p) => quad_wall_constraints(x, p, &self.params),
        }
    }

    /// Whether some admissible control satisfies every barrier condition at
    /// `x` simultaneously.
    ///
    /// States outside this set carry no invariance guarantee: the conditions
    /// conflict inside the control box, so even the strongest admissible
    /// intervention can fail (e.g. a quadrotor resting low near a side wall,
    /// tilted toward it — arresting the fall demands more thrust than the
    /// wall condition admits). The initial-state sampler rejects such spawns
    /// so safety rates measure the controllers rather than hopeless geometry.
    pub fn viable(&self, x: &DVector<f64>) -> bool {
        let constraints = self.constraints_at(x);
        let mut problem = QpProblem::new(self.system.neutral_control());
        problem.bounds = self.bounds.clone();
        for c in &constraints {
            problem = problem.with_ineq(c.a.clone(), c.b);
        }
        qp::solve(&problem).status == QpStatus::Optimal
    }

    /// Filters one planned control at state `x`.
    pub fn apply(&self, x: &DVector<f64>, u_ref: &DVector<f64>) -> FilterStep {
        let constraints = self.constraints_at(x);
        let out = match &self.system {
            SystemConfig::Dubins(_) => filter(u_ref, &constraints, &self.bounds),
            SystemConfig::Quadrotor(p) => {
                prioritized_filter(x, u_ref, p, &self.params, &self.bounds)
            }
        };
        let slacks = constraints.iter().map(|c| c.slack(&out.u)).collect();
        FilterStep {
            u: out.u,
            slacks,
            infeasible: out.infeasible,
        }
    }
}
