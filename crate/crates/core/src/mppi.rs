//! Sampling-based baseline planner (MPPI) over the same planning objective
//! as the gradient stage.
//!
//! Each control step draws `K` Gaussian perturbations of the warm-started
//! nominal sequence, clamps them to the control box, scores every candidate
//! with the shared rollout objective, and blends them with
//! exponentially-tilted weights. The output is a convex combination of
//! in-bounds sequences and therefore in bounds itself. Warm starting uses the
//! same shift scheme as the gradient planner, so the two planners differ only
//! in their inner solver.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cost::ControlTask;
use crate::error::{Error, Result};
use crate::gmpc::{initial_sequence, shift_warm_start};

/// Sampling parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MppiParams {
    /// Number of sampled perturbation sequences per step.
    pub num_samples: usize,
    /// Per-channel standard deviation of the control noise.
    pub noise_std: Vec<f64>,
    /// Weighting temperature `β`: weights are `exp(−(Cᵢ − min C)/β)`.
    pub temperature: f64,
    /// Episode seed; each control step derives its own stream from it.
    pub seed: u64,
}

impl MppiParams {
    /// Baseline sampling setup for the car.
    pub fn dubins_default(seed: u64) -> Self {
        MppiParams {
            num_samples: 1024,
            noise_std: vec![0.75],
            temperature: 1.0,
            seed,
        }
    }

    /// Baseline sampling setup for the quadrotor. Torque noise matching the
    /// thrust channel matters: with a timid torque spread the sampled mean
    /// can stay pinned against a torque bound for many steps once the
    /// receding-horizon warm start re-centers sampling there, and the
    /// resulting attitude windup is the dominant crash mode.
    pub fn quadrotor_default(seed: u64) -> Self {
        MppiParams {
            num_samples: 2048,
            noise_std: vec![2.0, 2.0],
            temperature: 1.0,
            seed,
        }
    }

    pub fn validate(&self, control_dim: usize) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::config("mppi num_samples must be >= 1"));
        }
        if self.noise_std.len() != control_dim {
            return Err(Error::config(format!(
                "mppi noise_std needs {} entries, got {}",
                control_dim,
                self.noise_std.len()
            )));
        }
        if self.noise_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::config("mppi noise_std entries must be positive"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("mppi temperature must be positive"));
        }
        Ok(())
    }
}

/// Exponentially-tilted weights over rollout costs.
///
/// The minimum finite cost is subtracted before exponentiation so the largest
/// weight is exactly 1 pre-normalization; non-finite costs get weight zero.
/// Requires at least one finite cost.
pub fn softmax_weights(costs: &[f64], beta: f64) -> Vec<f64> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|c| {
            if c.is_finite() {
                (-(c - min) / beta).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// One planning step's output.
#[derive(Debug, Clone)]
pub struct MppiPlan {
    /// First control of the blended sequence — the one to execute.
    pub control: DVector<f64>,
    /// Full blended horizon sequence (in bounds by convexity).
    pub sequence: Vec<DVector<f64>>,
    /// Wall-clock seconds spent producing the plan.
    pub solve_time: f64,
}

/// Receding-horizon MPPI planner with warm-started sampling.
#[derive(Clone)]
pub struct MppiPlanner {
    task: ControlTask,
    params: MppiParams,
    warm: Vec<DVector<f64>>,
    step: u64,
}

/// Decorrelates the per-step stream from the episode seed (splitmix-style
/// finalizer), so consecutive steps draw unrelated noise while the whole
/// episode remains a pure function of one seed.
fn step_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl MppiPlanner {
    pub fn new(task: ControlTask, params: MppiParams) -> Result<Self> {
        params.validate(task.model.control_dim())?;
        let warm = initial_sequence(&task);
        Ok(MppiPlanner {
            task,
            params,
            warm,
            step: 0,
        })
    }

    pub fn task(&self) -> &ControlTask {
        &self.task
    }

    /// The sequence the next [`Self::plan`] call will perturb.
    pub fn warm_start(&self) -> &[DVector<f64>] {
        &self.warm
    }

    /// Discards warm-start state and rewinds the noise stream.
    pub fn reset(&mut self) {
        self.warm = initial_sequence(&self.task);
        self.step = 0;
    }

    /// Samples, scores, and blends one control step from state `x`.
    ///
    /// Deterministic: the noise is a pure function of (seed, step index), and
    /// the weighted blend is an ordered sequential reduction, so results are
    /// identical regardless of how many threads score the rollouts.
    pub fn plan(&mut self, x: &DVector<f64>) -> Result<MppiPlan> {
        let start = Instant::now();
        let h = self.task.horizon;
        let m = self.task.model.control_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(step_seed(self.params.seed, self.step));
        self.step += 1;

        let channels: Vec<Normal<f64>> = self
            .params
            .noise_std
            .iter()
            .map(|s| Normal::new(0.0, *s).expect("validated noise std"))
            .collect();
        let mut candidates: Vec<Vec<DVector<f64>>> = Vec::with_capacity(self.params.num_samples);
        for _ in 0..self.params.num_samples {
            let mut seq = Vec::with_capacity(h);
            for k in 0..h {
                let mut u = DVector::from_fn(m, |c, _| {
                    self.warm[k][c] + channels[c].sample(&mut rng)
                });
                self.task.model.clamp_control(&mut u);
                seq.push(u);
            }
            candidates.push(seq);
        }

        let task = &self.task;
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|seq| task.objective(x, seq))
            .collect();
        if costs.iter().all(|c| !c.is_finite()) {
            return Err(Error::numerical(
                "mppi sampling",
                "every sampled rollout produced a non-finite cost".to_string(),
            ));
        }

        let weights = softmax_weights(&costs, self.params.temperature);
        let mut sequence = self.warm.clone();
        for (candidate, &w) in candidates.iter().zip(&weights) {
            if w == 0.0 {
                continue;
            }
            for (k, out) in sequence.iter_mut().enumerate() {
                // out += w · (candidate_k − nominal_k)
                out.axpy(w, &candidate[k], 1.0);
                out.axpy(-w, &self.warm[k], 1.0);
            }
        }
        // The blend is convex only up to the rounding of Σw = 1; make the
        // box guarantee exact.
        for u in &mut sequence {
            self.task.model.clamp_control(u);
        }

        self.warm = shift_warm_start(&sequence);
        Ok(MppiPlan {
            control: sequence[0].clone(),
            sequence,
            solve_time: start.elapsed().as_secs_f64(),
        })
    }
}
