//! Gradient-based MPC stage: at each control step the horizon control
//! sequence is optimized with L-BFGS, using gradients propagated exactly
//! through the Euler rollout by a reverse (adjoint) sweep.
//!
//! The decision vector stacks the horizon controls `u_0, …, u_{h−1}` into one
//! flat vector. A forward pass stores the visited states; the backward pass
//! carries the co-state
//!
//! ```text
//!     λ_k = A_kᵀ λ_{k+1} + ∇stage(x_k),       ∂C/∂u_k = B_kᵀ λ_{k+1}
//! ```
//!
//! with `A_k = ∂x_{k+1}/∂x_k` and `B_k = ∂x_{k+1}/∂u_k` from the Euler step,
//! so one objective-and-gradient evaluation costs two sweeps over the horizon
//! regardless of the control dimension.

use std::time::Instant;

use nalgebra::DVector;

use crate::cost::ControlTask;
use crate::dynamics::{euler_step, step_jacobians, SystemModel};
use crate::error::{Error, Result};
use crate::lbfgs::{self, LbfgsOptions, Termination};

/// Stacks a control sequence into one flat decision vector.
pub fn stack_controls(seq: &[DVector<f64>]) -> DVector<f64> {
    let m = seq.first().map_or(0, |u| u.len());
    let mut flat = DVector::zeros(seq.len() * m);
    for (k, u) in seq.iter().enumerate() {
        flat.rows_mut(k * m, m).copy_from(u);
    }
    flat
}

/// Splits a flat decision vector back into per-step controls.
pub fn unstack_controls(flat: &DVector<f64>, control_dim: usize) -> Vec<DVector<f64>> {
    assert_eq!(flat.len() % control_dim, 0, "ragged control vector");
    (0..flat.len() / control_dim)
        .map(|k| flat.rows(k * control_dim, control_dim).into_owned())
        .collect()
}

/// Whether every entry of a stacked control vector respects the per-channel
/// box (channels repeat with period `bounds.len()`).
fn flat_controls_in_bounds(flat: &DVector<f64>, bounds: &[(f64, f64)]) -> bool {
    flat.iter().enumerate().all(|(i, v)| {
        let (lo, hi) = bounds[i % bounds.len()];
        *v >= lo && *v <= hi
    })
}

/// Receding-horizon warm start: drop the executed first control, repeat the
/// last one. Length is preserved.
pub fn shift_warm_start(prev: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut shifted: Vec<DVector<f64>> = prev[1..].to_vec();
    shifted.push(prev[prev.len() - 1].clone());
    shifted
}

/// Objective value and exact gradient for arbitrary stage/terminal costs via
/// the adjoint sweep. The planner wires the task's costs in; keeping the
/// costs as parameters lets tests validate the recursion on plants and costs
/// with known closed-form gradients.
pub(crate) fn adjoint_value_and_gradient(
    model: &SystemModel,
    dt: f64,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    stage_cost: &dyn Fn(&DVector<f64>) -> f64,
    stage_grad: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    terminal_cost: &dyn Fn(&DVector<f64>) -> f64,
    terminal_grad: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    effort_weight: f64,
    neutral: &DVector<f64>,
) -> Result<(f64, Vec<DVector<f64>>)> {
    let h = controls.len();
    let mut states = Vec::with_capacity(h + 1);
    states.push(x0.clone());
    let mut value = 0.0;
    for (k, u) in controls.iter().enumerate() {
        value += stage_cost(&states[k]);
        if effort_weight != 0.0 {
            value += effort_weight * (u - neutral).norm_squared();
        }
        let next = euler_step(model, &states[k], u, dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical(
                "adjoint rollout",
                format!("state became non-finite at step {}", k + 1),
            ));
        }
        states.push(next);
    }
    value += terminal_cost(&states[h]);

    let mut grads = vec![DVector::zeros(0); h];
    let mut costate = terminal_grad(&states[h]);
    for k in (0..h).rev() {
        let (a, b) = step_jacobians(model, &states[k], &controls[k], dt);
        let mut du = b.transpose() * &costate;
        if effort_weight != 0.0 {
            let deviation = &controls[k] - neutral;
            du.axpy(2.0 * effort_weight, &deviation, 1.0);
        }
        grads[k] = du;
        costate = a.transpose() * costate + stage_grad(&states[k]);
    }
    Ok((value, grads))
}

/// Planning objective and its gradient over the flat control vector.
///
/// The value agrees with [`ControlTask::objective`]; the gradient comes from
/// the adjoint sweep with the hinge handled by its one-sided slope (zero on
/// the safe side of the margin).
pub fn cost_and_gradient(
    task: &ControlTask,
    x0: &DVector<f64>,
    flat: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    let controls = unstack_controls(flat, task.model.control_dim());
    let stage = |x: &DVector<f64>| task.stage_cost(x);
    let grad = |x: &DVector<f64>| task.stage_grad(x);
    let neutral = task.system.neutral_control();
    let (value, grads) = adjoint_value_and_gradient(
        &task.model,
        task.dt,
        x0,
        &controls,
        &stage,
        &grad,
        &stage,
        &grad,
        task.effort_weight,
        &neutral,
    )?;
    Ok((value, stack_controls(&grads)))
}

/// Central-difference gradient of the planning objective; the independent
/// oracle for [`cost_and_gradient`] (tests and the `check-gradients`
/// command).
pub fn finite_difference_gradient(
    task: &ControlTask,
    x0: &DVector<f64>,
    flat: &DVector<f64>,
    eps: f64,
) -> DVector<f64> {
    let m = task.model.control_dim();
    let mut grad = DVector::zeros(flat.len());
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + eps;
        let hi = task.objective(x0, &unstack_controls(&probe, m));
        probe[i] = flat[i] - eps;
        let lo = task.objective(x0, &unstack_controls(&probe, m));
        probe[i] = flat[i];
        grad[i] = (hi - lo) / (2.0 * eps);
    }
    grad
}

/// Per-plan diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct PlanDiagnostics {
    /// Objective of the returned sequence.
    pub objective: f64,
    /// Optimizer iterations spent.
    pub iterations: usize,
    /// The line search stalled and the best iterate so far was used.
    pub line_search_failed: bool,
    /// Clamping pushed the iterate above the warm start's objective, so the
    /// warm start was kept instead.
    pub reverted_to_warm_start: bool,
}

/// One planning step's output.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    /// First control of the optimized sequence — the one to execute.
    pub control: DVector<f64>,
    /// Full horizon sequence (already clamped to bounds).
    pub sequence: Vec<DVector<f64>>,
    /// Wall-clock seconds spent producing the plan.
    pub solve_time: f64,
    pub diagnostics: PlanDiagnostics,
}

/// Receding-horizon gradient planner with warm-started L-BFGS solves.
#[derive(Clone)]
pub struct GradientPlanner {
    task: ControlTask,
    options: LbfgsOptions,
    warm: Vec<DVector<f64>>,
}

impl GradientPlanner {
    pub fn new(task: ControlTask, options: LbfgsOptions) -> Result<Self> {
        options.validate()?;
        let warm = initial_sequence(&task);
        Ok(GradientPlanner {
            task,
            options,
            warm,
        })
    }

    pub fn task(&self) -> &ControlTask {
        &self.task
    }

    /// The sequence the next [`Self::plan`] call will start from.
    pub fn warm_start(&self) -> &[DVector<f64>] {
        &self.warm
    }

    /// Discards warm-start state, e.g. between episodes.
    pub fn reset(&mut self) {
        self.warm = initial_sequence(&self.task);
    }

    /// Optimizes the horizon controls from the current state.
    ///
    /// Line-search stalls yield the best iterate rather than an error; the
    /// returned sequence never scores worse than the warm start it grew from.
    /// Only a non-finite objective at the warm start itself is a hard error.
    pub fn plan(&mut self, x: &DVector<f64>) -> Result<PlanOutcome> {
        let start = Instant::now();
        let z0 = stack_controls(&self.warm);
        let n = z0.len();
        let warm_objective = self.task.objective(x, &self.warm);
        let task = &self.task;
        // The optimizer runs unconstrained, so its final iterate may sit far
        // outside the control box where clamping ruins it. Remember the best
        // in-bounds point it visits along the way (the warm start itself is
        // one, so something feasible is always on record) — bookkeeping
        // only, no extra objective evaluations.
        let mut best_feasible: Option<(f64, DVector<f64>)> = None;
        let result = lbfgs::minimize(
            |z| match cost_and_gradient(task, x, z) {
                Ok((f, g)) => {
                    if f.is_finite()
                        && best_feasible.as_ref().map_or(true, |(bf, _)| f < *bf)
                        && flat_controls_in_bounds(z, task.model.control_bounds())
                    {
                        best_feasible = Some((f, z.clone()));
                    }
                    (f, g)
                }
                Err(_) => (f64::INFINITY, DVector::zeros(n)),
            },
            z0,
            &self.options,
        )?;

        let mut sequence = unstack_controls(&result.x, self.task.model.control_dim());
        for u in &mut sequence {
            self.task.model.clamp_control(u);
        }
        let mut objective = self.task.objective(x, &sequence);
        if let Some((best_f, best_z)) = best_feasible {
            if best_f < objective {
                sequence = unstack_controls(&best_z, self.task.model.control_dim());
                objective = best_f;
            }
        }
        let mut diagnostics = PlanDiagnostics {
            objective,
            iterations: result.iterations,
            line_search_failed: result.termination == Termination::LineSearchFailure,
            reverted_to_warm_start: false,
        };
        if !(objective <= warm_objective) {
            sequence = self.warm.clone();
            diagnostics.objective = warm_objective;
            diagnostics.reverted_to_warm_start = true;
        }

        self.warm = shift_warm_start(&sequence);
        Ok(PlanOutcome {
            control: sequence[0].clone(),
            sequence,
            solve_time: start.elapsed().as_secs_f64(),
            diagnostics,
        })
    }
}

/// Starting sequence for the first solve of an episode: the system's neutral
/// control repeated over the horizon (zero turn rate, hover thrust).
pub fn initial_sequence(task: &ControlTask) -> Vec<DVector<f64>> {
    vec![task.system.neutral_control(); task.horizon]
}
