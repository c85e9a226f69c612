//! Safe model-predictive control in two stages.
//!
//! Stage one is a gradient-based MPC planner: the box-bounded optimal-control
//! problem is relaxed by a hinge penalty on the safety margin and solved with
//! L-BFGS, using an adjoint sweep for exact objective gradients. Stage two is
//! a control-barrier-function quadratic program that minimally edits the
//! planned control whenever it would breach a barrier condition, turning soft
//! penalties into hard per-step guarantees.
//!
//! The crate ships two benchmark plants (a Dubins car among circular
//! obstacles and a planar quadrotor in a square room), a sampling-based MPPI
//! planner used as a baseline, and a benchmark harness that runs seeded
//! episode batches and reports cost, safety rate, and solve-time metrics.

pub mod cbf;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod gmpc;
pub mod harness;
pub mod lbfgs;
pub mod mppi;
pub mod qp;
pub mod scenario;
pub mod systems;

pub use cbf::{CbfParams, FilterStep, SafetyFilter};
pub use cost::{soft_penalty, ControlTask, PenaltyParams};
pub use dynamics::{euler_step, rollout, SystemModel, Trajectory};
pub use error::{Error, Result};
pub use export::export_results;
pub use gmpc::{GradientPlanner, PlanOutcome};
pub use harness::{run_batch, run_episode, run_episode_from, BatchResult, EpisodeResult, Method};
pub use lbfgs::{minimize, LbfgsOptions, OptimResult, Termination};
pub use mppi::{softmax_weights, MppiParams, MppiPlan, MppiPlanner};
pub use qp::{solve, solve_single_halfspace, QpProblem, QpSolution, QpStatus};
pub use scenario::{MppiSettings, SamplerConfig, Scenario};
pub use systems::{
    dubins_model, quadrotor_model, DubinsParams, Obstacle, QuadrotorParams, SystemConfig,
};
