//! Closed-loop benchmark runner: executes seeded episodes for the four
//! methods (planner with or without the barrier filter) and aggregates
//! cost, safety, and timing metrics.

use std::time::Instant;

use nalgebra::DVector;

use crate::dynamics::{euler_step, Trajectory};
use crate::error::Result;
use crate::gmpc::GradientPlanner;
use crate::mppi::MppiPlanner;
use crate::scenario::Scenario;
use crate::systems::running_cost;
use crate::Error;

/// The four benchmark methods: each planner family, bare or wrapped in the
/// barrier filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Gmpc,
    Mppi,
    MppiCbf,
    GmpcCbf,
}

impl Method {
    /// All methods, in the order reports list them.
    pub fn all() -> [Method; 4] {
        [Method::Gmpc, Method::Mppi, Method::MppiCbf, Method::GmpcCbf]
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Gmpc => "gmpc",
            Method::Mppi => "mppi",
            Method::MppiCbf => "mppi-cbf",
            Method::GmpcCbf => "gmpc-cbf",
        }
    }

    pub fn uses_filter(self) -> bool {
        matches!(self, Method::MppiCbf | Method::GmpcCbf)
    }

    /// Whether the planning stage is the sampling planner (vs gradient).
    pub fn uses_sampling(self) -> bool {
        matches!(self, Method::Mppi | Method::MppiCbf)
    }

    /// Parses a method name; hyphens and underscores are interchangeable.
    pub fn parse(name: &str) -> Result<Method> {
        match name.replace('_', "-").as_str() {
            "gmpc" => Ok(Method::Gmpc),
            "mppi" => Ok(Method::Mppi),
            "mppi-cbf" => Ok(Method::MppiCbf),
            "gmpc-cbf" => Ok(Method::GmpcCbf),
            other => Err(Error::config(format!(
                "unknown method {other:?}; expected gmpc, mppi, mppi-cbf, or gmpc-cbf"
            ))),
        }
    }
}

/// One closed-loop episode with its metrics.
#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub seed: u64,
    pub trajectory: Trajectory,
    /// Goal-distance stage cost summed over the executed states plus the
    /// terminal distance; since stage and terminal costs are the same
    /// function this is the plain sum over every recorded state.
    pub cumulative_cost: f64,
    /// True iff every recorded state has `l(x) > 0` (zero tolerance) and the
    /// episode ran to completion. Failed episodes are never safe: the
    /// remaining steps were not certified.
    pub safe: bool,
    /// Smallest `l(x)` over the recorded states.
    pub min_constraint: f64,
    /// Control steps where the filter changed the plan by more than 1e-9.
    pub filter_interventions: usize,
    /// Planner failure diagnostics; the trajectory truncates at the failing
    /// step.
    pub failure: Option<String>,
}

/// All episodes of one method on one scenario.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub method: Method,
    pub episodes: Vec<EpisodeResult>,
}

impl BatchResult {
    /// Percentage of episodes flagged safe.
    pub fn safety_rate(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        let safe = self.episodes.iter().filter(|e| e.safe).count();
        100.0 * safe as f64 / self.episodes.len() as f64
    }

    /// Mean cumulative cost over the safe episodes only; `None` when no
    /// episode was safe.
    pub fn mean_cost_over_safe(&self) -> Option<f64> {
        let costs: Vec<f64> = self
            .episodes
            .iter()
            .filter(|e| e.safe)
            .map(|e| e.cumulative_cost)
            .collect();
        if costs.is_empty() {
            None
        } else {
            Some(costs.iter().sum::<f64>() / costs.len() as f64)
        }
    }

    /// Mean planner solve time over every planning call in the batch.
    pub fn mean_solve_time(&self) -> f64 {
        mean_over_steps(&self.episodes, |t| &t.solve_times)
    }

    /// Mean filter time over every control step (zero for unfiltered
    /// methods).
    pub fn mean_filter_time(&self) -> f64 {
        mean_over_steps(&self.episodes, |t| &t.filter_times)
    }

    pub fn total_interventions(&self) -> usize {
        self.episodes.iter().map(|e| e.filter_interventions).sum()
    }

    /// True when every episode ended in a planner failure.
    pub fn all_failed(&self) -> bool {
        !self.episodes.is_empty() && self.episodes.iter().all(|e| e.failure.is_some())
    }
}

fn mean_over_steps(episodes: &[EpisodeResult], series: fn(&Trajectory) -> &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in episodes {
        for v in series(&e.trajectory) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

enum Planner {
    Gradient(GradientPlanner),
    Sampling(MppiPlanner),
}

impl Planner {
    fn plan(&mut self, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        match self {
            Planner::Gradient(p) => p.plan(x).map(|o| (o.control, o.solve_time)),
            Planner::Sampling(p) => p.plan(x).map(|o| (o.control, o.solve_time)),
        }
    }
}

/// Runs one episode from a sampled start state (see
/// [`Scenario::sample_initial_state`]).
pub fn run_episode(scenario: &Scenario, method: Method, seed: u64) -> Result<EpisodeResult> {
    let x0 = scenario.sample_initial_state(seed)?;
    run_episode_from(scenario, method, seed, x0)
}

/// Runs one episode from an explicit start state.
///
/// Per step: plan, optionally filter, integrate one step. Planner failures
/// mark the episode failed and truncate the trajectory; they do not abort
/// the caller's batch. Returns `Err` only for configuration-level problems.
pub fn run_episode_from(
    scenario: &Scenario,
    method: Method,
    seed: u64,
    x0: DVector<f64>,
) -> Result<EpisodeResult> {
    let model = scenario.system.build_model()?;
    let mut planner = if method.uses_sampling() {
        Planner::Sampling(MppiPlanner::new(scenario.task()?, scenario.mppi_params(seed))?)
    } else {
        Planner::Gradient(GradientPlanner::new(scenario.task()?, scenario.lbfgs)?)
    };
    let filter = if method.uses_filter() {
        Some(scenario.safety_filter()?)
    } else {
        None
    };

    let steps = scenario.steps();
    let mut traj = Trajectory::default();
    let mut failure = None;
    let mut x = x0;
    traj.constraint_values.push(scenario.system.constraint(&x));
    traj.barrier_values.push(scenario.system.constraint_margins(&x));
    traj.states.push(x.clone());

    for k in 0..steps {
        let (u_plan, solve_time) = match planner.plan(&x) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(format!("step {k}: {e}"));
                break;
            }
        };
        let (u, filter_time, delta) = match &filter {
            Some(f) => {
                let t0 = Instant::now();
                let out = f.apply(&x, &u_plan);
                let elapsed = t0.elapsed().as_secs_f64();
                let delta = (&out.u - &u_plan).norm();
                (out.u, elapsed, delta)
            }
            None => (u_plan, 0.0, 0.0),
        };
        let x_next = euler_step(&model, &x, &u, scenario.dt);
        if x_next.iter().any(|v| !v.is_finite()) {
            failure = Some(format!("step {k}: state became non-finite"));
            break;
        }
        traj.controls.push(u);
        traj.solve_times.push(solve_time);
        traj.filter_times.push(filter_time);
        traj.filter_deltas.push(delta);
        traj.constraint_values
            .push(scenario.system.constraint(&x_next));
        traj.barrier_values
            .push(scenario.system.constraint_margins(&x_next));
        traj.states.push(x_next.clone());
        x = x_next;
    }

    debug_assert!(traj.is_consistent());
    let goal = scenario.system.goal();
    let cumulative_cost = traj.states.iter().map(|s| running_cost(s, goal)).sum();
    let min_constraint = traj.min_constraint();
    let filter_interventions = traj.filter_deltas.iter().filter(|d| **d > 1e-9).count();
    Ok(EpisodeResult {
        seed,
        trajectory: traj,
        cumulative_cost,
        safe: failure.is_none() && min_constraint > 0.0,
        min_constraint,
        filter_interventions,
        failure,
    })
}

/// Runs every seed in the scenario sequentially and collects the batch.
///
/// Episodes are independent; running them in seed order keeps timing
/// measurements free of scheduler interference and the report a pure
/// function of (scenario, method, seeds).
pub fn run_batch(scenario: &Scenario, method: Method) -> Result<BatchResult> {
    let mut episodes = Vec::with_capacity(scenario.seeds.len());
    for &seed in &scenario.seeds {
        episodes.push(run_episode(scenario, method, seed)?);
    }
    Ok(BatchResult { method, episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::QuadrotorParams;

    fn short_dubins() -> Scenario {
        let mut sc = Scenario::default_dubins();
        sc.duration = 0.5; // 10 steps
        sc.horizon = 10;
        sc.mppi.num_samples = 64;
        sc
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::all() {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert_eq!(Method::parse("gmpc_cbf").unwrap(), Method::GmpcCbf);
        assert!(Method::parse("newton").is_err());
        assert!(Method::Gmpc.uses_filter() == false && Method::MppiCbf.uses_filter());
        assert!(Method::Mppi.uses_sampling() && !Method::GmpcCbf.uses_sampling());
    }

    #[test]
    fn quad_episode_at_goal_hover_is_free_and_safe() {
        let mut sc = Scenario::default_quadrotor();
        sc.duration = 1.0;
        let hover = DVector::from_vec(vec![
            0.0,
            0.0,
            QuadrotorParams::hover_attitude(),
            0.0,
            0.0,
            0.0,
        ]);
        let ep = run_episode_from(&sc, Method::GmpcCbf, 0, hover).unwrap();
        assert!(ep.failure.is_none());
        assert!(ep.safe);
        assert!(ep.cumulative_cost < 1e-6, "cost {}", ep.cumulative_cost);
        assert_eq!(ep.filter_interventions, 0);
        assert!(ep.trajectory.is_consistent());
        assert_eq!(ep.trajectory.len(), sc.steps());
    }

    #[test]
    fn dubins_head_on_with_filter_stays_safe() {
        let mut sc = Scenario::default_dubins();
        sc.duration = 2.0;
        // Aimed at the obstacle with a small lateral offset. (Exactly on the
        // axis the barrier has zero control authority — steering cannot
        // change the radial approach rate at that instant — and the state is
        // a symmetry fixed point of the whole loop; that set has measure
        // zero and the sampler never produces it.)
        let start = DVector::from_vec(vec![-0.8, 0.02, 0.0]);
        let ep = run_episode_from(&sc, Method::GmpcCbf, 0, start).unwrap();
        assert!(ep.failure.is_none());
        assert!(ep.safe, "min l = {}", ep.min_constraint);
        assert!(ep.min_constraint > 0.0);
        assert_eq!(ep.trajectory.states.len(), 41);
    }

    #[test]
    fn unfiltered_methods_report_zero_filter_activity() {
        let sc = short_dubins();
        for method in [Method::Gmpc, Method::Mppi] {
            let ep = run_episode(&sc, method, 3).unwrap();
            assert_eq!(ep.filter_interventions, 0);
            assert!(ep.trajectory.filter_deltas.iter().all(|d| *d == 0.0));
            assert!(ep.trajectory.filter_times.iter().all(|t| *t == 0.0));
        }
    }

    #[test]
    fn episodes_are_deterministic() {
        let sc = short_dubins();
        for method in [Method::GmpcCbf, Method::MppiCbf] {
            let a = run_episode(&sc, method, 7).unwrap();
            let b = run_episode(&sc, method, 7).unwrap();
            assert_eq!(a.trajectory.states, b.trajectory.states);
            assert_eq!(a.trajectory.controls, b.trajectory.controls);
            assert_eq!(a.cumulative_cost.to_bits(), b.cumulative_cost.to_bits());
            assert_eq!(a.safe, b.safe);
            assert_eq!(a.filter_interventions, b.filter_interventions);
        }
    }

    #[test]
    fn planner_failure_truncates_and_marks_unsafe() {
        let sc = short_dubins();
        let bad = DVector::from_vec(vec![f64::NAN, 0.0, 0.0]);
        let ep = run_episode_from(&sc, Method::Gmpc, 0, bad).unwrap();
        let msg = ep.failure.as_deref().expect("should fail");
        assert!(msg.starts_with("step 0:"), "{msg}");
        assert!(!ep.safe);
        assert_eq!(ep.trajectory.len(), 0);
        assert_eq!(ep.trajectory.states.len(), 1);
        assert!(ep.trajectory.is_consistent());
    }

    #[test]
    fn batch_metrics_aggregate_over_safe_episodes_only() {
        let stub = |seed, cost, safe, failure: Option<&str>| EpisodeResult {
            seed,
            trajectory: Trajectory::default(),
            cumulative_cost: cost,
            safe,
            min_constraint: if safe { 0.1 } else { -0.1 },
            filter_interventions: 0,
            failure: failure.map(str::to_owned),
        };
        let batch = BatchResult {
            method: Method::Gmpc,
            episodes: vec![
                stub(0, 2.0, true, None),
                stub(1, 99.0, false, None),
                stub(2, 4.0, true, None),
                stub(3, 0.0, false, Some("step 1: boom")),
            ],
        };
        assert_eq!(batch.safety_rate(), 50.0);
        assert_eq!(batch.mean_cost_over_safe(), Some(3.0));
        assert!(!batch.all_failed());

        let none_safe = BatchResult {
            method: Method::Gmpc,
            episodes: vec![stub(0, 1.0, false, Some("step 0: x"))],
        };
        assert_eq!(none_safe.mean_cost_over_safe(), None);
        assert_eq!(none_safe.safety_rate(), 0.0);
        assert!(none_safe.all_failed());
    }

    #[test]
    fn batch_runs_every_seed_in_order() {
        let mut sc = short_dubins();
        sc.seeds = vec![5, 9, 2];
        let batch = run_batch(&sc, Method::Gmpc).unwrap();
        let seeds: Vec<u64> = batch.episodes.iter().map(|e| e.seed).collect();
        assert_eq!(seeds, vec![5, 9, 2]);
        for ep in &batch.episodes {
            assert!(ep.trajectory.is_consistent());
            assert_eq!(ep.trajectory.len(), sc.steps());
        }
    }

    #[test]
    fn cumulative_cost_matches_stage_plus_terminal_form() {
        let sc = short_dubins();
        let ep = run_episode(&sc, Method::GmpcCbf, 1).unwrap();
        let goal = sc.system.goal();
        let k = ep.trajectory.len();
        let stage: f64 = ep.trajectory.states[..k]
            .iter()
            .map(|x| running_cost(x, goal))
            .sum();
        let terminal = running_cost(&ep.trajectory.states[k], goal);
        assert!((ep.cumulative_cost - (stage + terminal)).abs() < 1e-12);
    }
}
