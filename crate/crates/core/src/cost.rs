//! The soft-constrained planning objective shared by both planners.
//!
//! For a horizon-`h` control sequence `u_0..u_{h-1}` rolled out from `x_0`:
//!
//! ```text
//!     C = Σ_{k=0}^{h-1} [ r(x_k) + p(l(x_k)) + w ‖u_k - u_n‖² ]  +  φ(x_h) + p(l(x_h))
//! ```
//!
//! where `r` is the goal-tracking cost, `φ = r` the terminal cost, `l` the
//! safety margin, and `p(l) = λ max(0, δ - l)` a hinge penalty that activates
//! once the margin drops below the inflation `δ`. The quadratic control-effort
//! term measures deviation from the neutral control `u_n` (hover thrust for
//! the quadrotor, zero turn rate for the car) and is off by default (`w = 0`).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rollout, SystemModel};
use crate::error::{Error, Result};
use crate::systems::{running_cost, running_cost_grad, SystemConfig};

/// Hinge-penalty parameters: weight `λ` and margin inflation `δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyParams {
    pub weight: f64,
    pub margin: f64,
}

impl Default for PenaltyParams {
    fn default() -> Self {
        PenaltyParams {
            weight: 100.0,
            margin: 0.05,
        }
    }
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(Error::config("penalty weight must be positive"));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config("penalty margin must be positive"));
        }
        Ok(())
    }
}

/// `p(l) = λ max(0, δ - l)`.
pub fn soft_penalty(l: f64, params: &PenaltyParams) -> f64 {
    params.weight * (params.margin - l).max(0.0)
}

/// Subgradient of [`soft_penalty`] with respect to `l`. At the kink `l = δ`
/// the inactive branch (zero) is chosen.
pub fn soft_penalty_slope(l: f64, params: &PenaltyParams) -> f64 {
    if l < params.margin {
        -params.weight
    } else {
        0.0
    }
}

/// Everything needed to evaluate the planning objective for one system:
/// the model, the system's margin/goal functions, the penalty, and the
/// discretization.
#[derive(Clone)]
pub struct ControlTask {
    pub model: SystemModel,
    pub system: SystemConfig,
    pub penalty: PenaltyParams,
    pub dt: f64,
    pub horizon: usize,
    /// Weight of the optional quadratic control-effort term, measured as
    /// deviation from the system's neutral control so that holding trim
    /// (hover thrust, zero turn rate) costs nothing.
    pub effort_weight: f64,
}

impl ControlTask {
    pub fn new(
        system: SystemConfig,
        penalty: PenaltyParams,
        dt: f64,
        horizon: usize,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt must be positive"));
        }
        if horizon == 0 {
            return Err(Error::config("planning horizon must be >= 1"));
        }
        penalty.validate()?;
        let model = system.build_model()?;
        Ok(ControlTask {
            model,
            system,
            penalty,
            dt,
            horizon,
            effort_weight: 0.0,
        })
    }

    pub fn goal(&self) -> [f64; 2] {
        self.system.goal()
    }

    /// Goal-tracking cost `r(x)` (also used as the terminal cost `φ`).
    pub fn tracking_cost(&self, x: &DVector<f64>) -> f64 {
        running_cost(x, self.goal())
    }

    /// State-dependent part of the stage cost: `r(x) + p(l(x))`.
    pub fn stage_cost(&self, x: &DVector<f64>) -> f64 {
        self.tracking_cost(x) + soft_penalty(self.system.constraint(x), &self.penalty)
    }

    /// Gradient of [`Self::stage_cost`] with respect to the state.
    pub fn stage_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = running_cost_grad(x, self.goal());
        let slope = soft_penalty_slope(self.system.constraint(x), &self.penalty);
        if slope != 0.0 {
            grad.axpy(slope, &self.system.constraint_grad(x), 1.0);
        }
        grad
    }

    /// Evaluates the full objective for a control sequence applied from `x0`.
    pub fn objective(&self, x0: &DVector<f64>, controls: &[DVector<f64>]) -> f64 {
        let states = rollout(&self.model, x0, controls, self.dt);
        let neutral = self.system.neutral_control();
        let mut total = 0.0;
        for (k, u) in controls.iter().enumerate() {
            total += self.stage_cost(&states[k]);
            if self.effort_weight != 0.0 {
                total += self.effort_weight * (u - &neutral).norm_squared();
            }
        }
        total += self.stage_cost(states.last().unwrap());
        total
    }
}
