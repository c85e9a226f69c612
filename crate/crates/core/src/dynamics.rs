//! Control-affine dynamics and forward-Euler integration.
//!
//! Every plant in this crate has the form
//!
//! ```text
//!     x_dot = f(x) + g(x) u
//! ```
//!
//! with drift `f`, actuation matrix `g`, and box-bounded controls. The same
//! Euler discretization is used everywhere a model is stepped — by the
//! planners, by the safety filter's closed loop, and by the benchmark
//! harness — so that all components agree on the discrete-time system.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

type StateFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type StateMatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ControlJacobianFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A control-affine plant `x_dot = f(x) + g(x) u` with box control bounds.
///
/// Dimensions are runtime properties so that new systems can be added without
/// touching the planners or the filter. The model also carries the analytic
/// Jacobians `∂f/∂x` and `∂(g(x)u)/∂x` needed by the gradient planner's
/// adjoint sweep.
#[derive(Clone)]
pub struct SystemModel {
    state_dim: usize,
    control_dim: usize,
    drift: StateFn,
    actuation: StateMatrixFn,
    drift_jacobian: StateMatrixFn,
    actuation_state_jacobian: ControlJacobianFn,
    control_bounds: Vec<(f64, f64)>,
}

impl SystemModel {
    /// Builds a model, validating that the bound list matches the control
    /// dimension and that every bound interval is non-empty.
    pub fn new(
        state_dim: usize,
        control_dim: usize,
        control_bounds: Vec<(f64, f64)>,
        drift: StateFn,
        actuation: StateMatrixFn,
        drift_jacobian: StateMatrixFn,
        actuation_state_jacobian: ControlJacobianFn,
    ) -> Result<Self> {
        if state_dim == 0 || control_dim == 0 {
            return Err(Error::config("state and control dimensions must be >= 1"));
        }
        if control_bounds.len() != control_dim {
            return Err(Error::config(format!(
                "expected {} control bounds, got {}",
                control_dim,
                control_bounds.len()
            )));
        }
        for (i, (lo, hi)) in control_bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::config(format!(
                    "control bound {i} is empty: [{lo}, {hi}]"
                )));
            }
        }
        Ok(SystemModel {
            state_dim,
            control_dim,
            drift,
            actuation,
            drift_jacobian,
            actuation_state_jacobian,
            control_bounds,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn control_bounds(&self) -> &[(f64, f64)] {
        &self.control_bounds
    }

    /// Drift term `f(x)`.
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        (self.drift)(x)
    }

    /// Actuation matrix `g(x)` (`state_dim × control_dim`).
    pub fn actuation(&self, x: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        (self.actuation)(x)
    }

    /// Analytic Jacobian `∂f/∂x`.
    pub fn drift_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        (self.drift_jacobian)(x)
    }

    /// Analytic Jacobian `∂(g(x)u)/∂x` for a fixed control `u`.
    pub fn actuation_state_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        debug_assert_eq!(x.len(), self.state_dim);
        debug_assert_eq!(u.len(), self.control_dim);
        (self.actuation_state_jacobian)(x, u)
    }

    /// Clamps a control vector to the box bounds, component-wise.
    pub fn clamp_control(&self, u: &mut DVector<f64>) {
        assert_eq!(u.len(), self.control_dim, "control dimension mismatch");
        for (ui, (lo, hi)) in u.iter_mut().zip(&self.control_bounds) {
            *ui = ui.clamp(*lo, *hi);
        }
    }

    pub fn control_in_bounds(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.len() == self.control_dim
            && u.iter()
                .zip(&self.control_bounds)
                .all(|(ui, (lo, hi))| *ui >= lo - tol && *ui <= hi + tol)
    }
}

/// One forward-Euler step: `x + dt * (f(x) + g(x) u)`.
pub fn euler_step(model: &SystemModel, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
    assert_eq!(x.len(), model.state_dim(), "state dimension mismatch");
    assert_eq!(u.len(), model.control_dim(), "control dimension mismatch");
    let mut dx = model.drift(x);
    dx.gemv(1.0, &model.actuation(x), u, 1.0);
    dx *= dt;
    dx += x;
    dx
}

/// Jacobians of the Euler step map `x_next = x + dt (f(x) + g(x) u)`:
/// `A = ∂x_next/∂x = I + dt (∂f/∂x + ∂(g u)/∂x)` and `B = ∂x_next/∂u = dt g(x)`.
pub fn step_jacobians(
    model: &SystemModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = model.state_dim();
    let mut a = model.drift_jacobian(x);
    a += model.actuation_state_jacobian(x, u);
    a *= dt;
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let b = model.actuation(x) * dt;
    (a, b)
}

/// Rolls the model forward under an open-loop control sequence.
///
/// Returns `controls.len() + 1` states, starting with `x0`.
pub fn rollout(
    model: &SystemModel,
    x0: &DVector<f64>,
    controls: &[DVector<f64>],
    dt: f64,
) -> Vec<DVector<f64>> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for u in controls {
        let next = euler_step(model, states.last().unwrap(), u, dt);
        states.push(next);
    }
    states
}

/// An executed closed-loop trajectory together with per-step diagnostics.
///
/// Invariant: `states.len() == controls.len() + 1`; the diagnostic series
/// indexed by state (`constraint_values`, `barrier_values`) have one entry per
/// state, the series indexed by control step (`filter_deltas`, `solve_times`,
/// `filter_times`) one entry per control.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
    /// Safety margin `l(x)` at each state.
    pub constraint_values: Vec<f64>,
    /// Per-constraint barrier/clearance values at each state.
    pub barrier_values: Vec<Vec<f64>>,
    /// `‖u_filtered − u_nominal‖` at each control step.
    pub filter_deltas: Vec<f64>,
    /// Planner solve time per control step, in seconds (optimizer only).
    pub solve_times: Vec<f64>,
    /// Safety-filter time per control step, in seconds.
    pub filter_times: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Smallest `l(x)` seen along the trajectory (including the initial
    /// state). Empty trajectories report `+inf`.
    pub fn min_constraint(&self) -> f64 {
        self.constraint_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks the length invariants; used by tests and the exporter.
    pub fn is_consistent(&self) -> bool {
        let k = self.controls.len();
        self.states.len() == k + 1
            && self.constraint_values.len() == k + 1
            && self.barrier_values.len() == k + 1
            && self.filter_deltas.len() == k
            && self.solve_times.len() == k
            && self.filter_times.len() == k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A 2-state single integrator with direct velocity control on the first
    /// coordinate: f = (x1, 0), g = (0, 1)^T.
    fn toy_model() -> SystemModel {
        SystemModel::new(
            2,
            1,
            vec![(-1.0, 1.0)],
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[1], 0.0])),
            Arc::new(|_x: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[0.0, 1.0])),
            Arc::new(|_x: &DVector<f64>| {
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
            }),
            Arc::new(|_x: &DVector<f64>, _u: &DVector<f64>| DMatrix::zeros(2, 2)),
        )
        .unwrap()
    }

    #[test]
    fn euler_step_matches_hand_computation() {
        let model = toy_model();
        let x = DVector::from_vec(vec![1.0, 2.0]);
        let u = DVector::from_vec(vec![0.5]);
        let next = euler_step(&model, &x, &u, 0.1);
        // x1' = 1 + 0.1 * 2 = 1.2; x2' = 2 + 0.1 * 0.5 = 2.05
        assert!((next[0] - 1.2).abs() < 1e-15);
        assert!((next[1] - 2.05).abs() < 1e-15);
    }

    #[test]
    fn rollout_has_one_more_state_than_controls() {
        let model = toy_model();
        let x0 = DVector::zeros(2);
        let controls = vec![DVector::from_vec(vec![0.1]); 7];
        let states = rollout(&model, &x0, &controls, 0.05);
        assert_eq!(states.len(), 8);
        assert_eq!(states[0], x0);
    }

    #[test]
    fn step_jacobians_match_finite_differences() {
        let model = toy_model();
        let x = DVector::from_vec(vec![0.3, -0.7]);
        let u = DVector::from_vec(vec![0.2]);
        let dt = 0.05;
        let (a, b) = step_jacobians(&model, &x, &u, dt);
        let eps = 1e-6;
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            let col = (euler_step(&model, &xp, &u, dt) - euler_step(&model, &xm, &u, dt)) / (2.0 * eps);
            for i in 0..2 {
                assert!((a[(i, j)] - col[i]).abs() < 1e-9);
            }
        }
        let mut up = u.clone();
        let mut um = u.clone();
        up[0] += eps;
        um[0] -= eps;
        let col = (euler_step(&model, &x, &up, dt) - euler_step(&model, &x, &um, dt)) / (2.0 * eps);
        for i in 0..2 {
            assert!((b[(i, 0)] - col[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds_are_validated_at_construction() {
        let bad = SystemModel::new(
            2,
            1,
            vec![(1.0, -1.0)],
            Arc::new(|_x: &DVector<f64>| DVector::zeros(2)),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(2, 1)),
            Arc::new(|_x: &DVector<f64>| DMatrix::zeros(2, 2)),
            Arc::new(|_x: &DVector<f64>, _u: &DVector<f64>| DMatrix::zeros(2, 2)),
        );
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn clamp_control_respects_box() {
        let model = toy_model();
        let mut u = DVector::from_vec(vec![3.0]);
        model.clamp_control(&mut u);
        assert_eq!(u[0], 1.0);
        assert!(model.control_in_bounds(&u, 0.0));
    }
}
