//! Experiment configuration: plant selection and parameters, planner
//! horizons, penalty/barrier gains, sampling setup, and the episode seed
//! list — plus loading all of it from a TOML file.
//!
//! Unknown keys anywhere in a scenario file are rejected, so typos fail fast
//! instead of silently running with defaults.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cbf::{CbfParams, SafetyFilter};
use crate::cost::{ControlTask, PenaltyParams};
use crate::error::{Error, Result};
use crate::lbfgs::LbfgsOptions;
use crate::mppi::MppiParams;
use crate::systems::{DubinsParams, QuadrotorParams, SystemConfig};

/// Initial-state sampler settings.
///
/// The two plants read different fields: the car uses the annulus radii, the
/// quadrotor the room fraction and attitude spread. Fields that do not apply
/// to the configured system are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Car: inner radius of the start annulus around the obstacle centroid.
    pub radius_min: f64,
    /// Car: outer radius of the start annulus.
    pub radius_max: f64,
    /// Quadrotor: start positions are uniform in `±(fraction · w)`.
    pub position_fraction: f64,
    /// Quadrotor: attitude uniform within `hover ± spread` radians.
    pub attitude_spread: f64,
    /// Draw budget before sampling gives up with a configuration error.
    pub max_rejections: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            radius_min: 0.5,
            radius_max: 1.0,
            position_fraction: 0.8,
            attitude_spread: 0.3,
            max_rejections: 1000,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_min > 0.0 && self.radius_min.is_finite()) {
            return Err(Error::config("sampler radius_min must be positive"));
        }
        if !(self.radius_max >= self.radius_min && self.radius_max.is_finite()) {
            return Err(Error::config("sampler radius_max must be >= radius_min"));
        }
        if !(self.position_fraction >= 0.0 && self.position_fraction < 1.0) {
            return Err(Error::config("sampler position_fraction must lie in [0, 1)"));
        }
        if !(self.attitude_spread >= 0.0 && self.attitude_spread.is_finite()) {
            return Err(Error::config("sampler attitude_spread must be >= 0"));
        }
        if self.max_rejections == 0 {
            return Err(Error::config("sampler max_rejections must be >= 1"));
        }
        Ok(())
    }
}

/// Episode-independent sampling-planner settings; the per-episode seed is
/// injected by the harness via [`Scenario::mppi_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct MppiSettings {
    pub num_samples: usize,
    pub noise_std: Vec<f64>,
    pub temperature: f64,
}

impl MppiSettings {
    fn from_params(p: MppiParams) -> Self {
        MppiSettings {
            num_samples: p.num_samples,
            noise_std: p.noise_std,
            temperature: p.temperature,
        }
    }
}

/// A complete, validated experiment description.
///
/// Construct one with [`Scenario::default_dubins`] /
/// [`Scenario::default_quadrotor`], or load it from TOML with
/// [`Scenario::load`].
#[derive(Clone, Debug)]
pub struct Scenario {
    pub system: SystemConfig,
    /// Integration and control period, seconds.
    pub dt: f64,
    /// Planning horizon, steps.
    pub horizon: usize,
    /// Episode length, seconds.
    pub duration: f64,
    /// Weight of the quadratic control-effort term in the planner objective.
    pub effort_weight: f64,
    pub penalty: PenaltyParams,
    pub cbf: CbfParams,
    pub mppi: MppiSettings,
    pub lbfgs: LbfgsOptions,
    pub sampler: SamplerConfig,
    /// One closed-loop episode is run per seed; the seed drives both the
    /// initial-state draw and the sampling planner's noise.
    pub seeds: Vec<u64>,
}

impl Scenario {
    /// Car benchmark with stock parameters: 2 s episodes at 20 Hz.
    ///
    /// The penalty weight is deliberately light. The planners see the
    /// obstacle over a full one-second preview, so any heavier weight makes
    /// them orbit the margin band and the unfiltered/filtered comparison
    /// degenerates to four identical 100% rows; at λ = 2 the distance term
    /// can outbid the margin near the goal line and the unfiltered planners
    /// shave it, which is the regime the safety comparison is about.
    pub fn default_dubins() -> Self {
        Scenario {
            system: SystemConfig::Dubins(DubinsParams::default()),
            dt: 0.05,
            horizon: 20,
            duration: 2.0,
            effort_weight: 0.0,
            penalty: PenaltyParams {
                weight: 2.0,
                ..PenaltyParams::default()
            },
            cbf: CbfParams::dubins_default(),
            mppi: MppiSettings::from_params(MppiParams::dubins_default(0)),
            lbfgs: LbfgsOptions::default(),
            sampler: SamplerConfig::default(),
            seeds: (0..20).collect(),
        }
    }

    /// Quadrotor benchmark with stock parameters: 3 s episodes at 20 Hz.
    ///
    /// The effort weight is nonzero here: with a 50-iteration budget per
    /// solve, an unregularized planner happily commands bang-bang torque
    /// whose attitude swings no thrust-only filter can compensate. Weighting
    /// deviation from hover keeps both planners in the regime the filter can
    /// actually rescue.
    pub fn default_quadrotor() -> Self {
        Scenario {
            system: SystemConfig::Quadrotor(QuadrotorParams::default()),
            dt: 0.05,
            horizon: 20,
            duration: 3.0,
            effort_weight: 0.05,
            penalty: PenaltyParams::default(),
            cbf: CbfParams::quadrotor_default(),
            mppi: MppiSettings::from_params(MppiParams::quadrotor_default(0)),
            lbfgs: LbfgsOptions::default(),
            sampler: SamplerConfig {
                position_fraction: 0.87,
                attitude_spread: 0.42,
                ..SamplerConfig::default()
            },
            seeds: (0..20).collect(),
        }
    }

    /// Parses and validates a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text)
            .map_err(|e| Error::config(format!("scenario parse error: {e}")))?;
        let scenario = file.resolve()?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Reads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon must be >= 1"));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(Error::config("duration must be at least one time step"));
        }
        if !(self.effort_weight >= 0.0 && self.effort_weight.is_finite()) {
            return Err(Error::config("effort_weight must be >= 0"));
        }
        self.penalty.validate()?;
        self.cbf.validate()?;
        self.mppi_params(0).validate(self.system.control_dim())?;
        self.lbfgs.validate()?;
        self.sampler.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seed list must not be empty"));
        }
        Ok(())
    }

    /// Number of closed-loop control steps per episode.
    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Builds the planning problem shared by both planner families.
    pub fn task(&self) -> Result<ControlTask> {
        let mut task = ControlTask::new(
            self.system.clone(),
            self.penalty,
            self.dt,
            self.horizon,
        )?;
        task.effort_weight = self.effort_weight;
        Ok(task)
    }

    /// Sampling-planner parameters for one episode.
    pub fn mppi_params(&self, seed: u64) -> MppiParams {
        MppiParams {
            num_samples: self.mppi.num_samples,
            noise_std: self.mppi.noise_std.clone(),
            temperature: self.mppi.temperature,
            seed,
        }
    }

    /// Builds the barrier filter configured for this scenario.
    pub fn safety_filter(&self) -> Result<SafetyFilter> {
        SafetyFilter::new(self.system.clone(), self.cbf)
    }

    /// Draws a start state for one episode.
    ///
    /// The draw is a pure function of `seed` (a dedicated generator per
    /// episode, independent of the planner noise streams). Candidates with
    /// safety margin `l(x₀)` at or below the penalty margin are rejected and
    /// redrawn; exceeding the rejection budget is a configuration error
    /// (the sampler region is incompatible with the safe set).
    ///
    /// * Car: position uniform by area on the annulus
    ///   `radius_min ≤ ‖p − c‖ ≤ radius_max` around the obstacle centroid
    ///   `c`, heading uniform in `[0, 2π)` — many draws therefore point
    ///   straight at an obstacle.
    /// * Quadrotor: position uniform in the room shrunk by
    ///   `position_fraction`, attitude uniform within `hover ±
    ///   attitude_spread`, all velocities zero.
    pub fn sample_initial_state(&self, seed: u64) -> Result<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = &self.sampler;
        // A spawn must clear the margin AND lie in the filter's viable set;
        // outside it the barrier conditions conflict inside the control box,
        // so no controller — filtered or not — could be held accountable for
        // the episode. Rejection keeps safety rates about the methods.
        let filter = self.safety_filter()?;
        let admissible =
            |x: &DVector<f64>| self.system.constraint(x) > self.penalty.margin && filter.viable(x);
        match &self.system {
            SystemConfig::Dubins(p) => {
                let n = p.obstacles.len();
                let (cx, cy) = if n == 0 {
                    (0.0, 0.0)
                } else {
                    let inv = 1.0 / n as f64;
                    (
                        p.obstacles.iter().map(|o| o.x).sum::<f64>() * inv,
                        p.obstacles.iter().map(|o| o.y).sum::<f64>() * inv,
                    )
                };
                let (r_lo2, r_hi2) = (s.radius_min.powi(2), s.radius_max.powi(2));
                for _ in 0..s.max_rejections {
                    // sqrt of a uniform draw on [r_lo², r_hi²] makes the
                    // position uniform by area, not clustered at the center.
                    let r = (rng.gen::<f64>() * (r_hi2 - r_lo2) + r_lo2).sqrt();
                    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                    let heading = rng.gen_range(0.0..std::f64::consts::TAU);
                    let x = DVector::from_vec(vec![
                        cx + r * phi.cos(),
                        cy + r * phi.sin(),
                        heading,
                    ]);
                    if admissible(&x) {
                        return Ok(x);
                    }
                }
            }
            SystemConfig::Quadrotor(p) => {
                let lim = s.position_fraction * p.room_half_extent;
                let hover = QuadrotorParams::hover_attitude();
                for _ in 0..s.max_rejections {
                    let px = if lim > 0.0 { rng.gen_range(-lim..lim) } else { 0.0 };
                    let pz = if lim > 0.0 { rng.gen_range(-lim..lim) } else { 0.0 };
                    let theta = if s.attitude_spread > 0.0 {
                        hover + rng.gen_range(-s.attitude_spread..s.attitude_spread)
                    } else {
                        hover
                    };
                    let x = DVector::from_vec(vec![px, pz, theta, 0.0, 0.0, 0.0]);
                    if admissible(&x) {
                        return Ok(x);
                    }
                }
            }
        }
        Err(Error::config(format!(
            "initial-state sampler found no admissible state (l(x0) > {}, viable) in {} draws",
            self.penalty.margin, s.max_rejections
        )))
    }
}

/// Raw deserialization target for scenario files. Every field is optional;
/// [`ScenarioFile::resolve`] fills in system-appropriate defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScenarioFile {
    system: Option<String>,
    dt: Option<f64>,
    horizon: Option<usize>,
    duration: Option<f64>,
    effort_weight: Option<f64>,
    /// Number of episodes; seeds are `base_seed..base_seed + episodes`.
    episodes: Option<usize>,
    base_seed: Option<u64>,
    /// Explicit seed list; mutually exclusive with `episodes`/`base_seed`.
    seeds: Option<Vec<u64>>,
    dubins: Option<DubinsParams>,
    quadrotor: Option<QuadrotorParams>,
    penalty: Option<PenaltyParams>,
    cbf: Option<CbfSection>,
    mppi: Option<MppiSection>,
    lbfgs: Option<LbfgsOptions>,
    sampler: Option<SamplerConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CbfSection {
    alpha: Option<f64>,
    gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MppiSection {
    num_samples: Option<usize>,
    noise_std: Option<Vec<f64>>,
    temperature: Option<f64>,
}

impl ScenarioFile {
    fn resolve(self) -> Result<Scenario> {
        let name = self
            .system
            .ok_or_else(|| Error::config("scenario must set system = \"dubins\" or \"quadrotor\""))?;
        let base = match name.as_str() {
            "dubins" => {
                if self.quadrotor.is_some() {
                    return Err(Error::config(
                        "system = \"dubins\" but a [quadrotor] table is present",
                    ));
                }
                let mut sc = Scenario::default_dubins();
                if let Some(p) = self.dubins {
                    sc.system = SystemConfig::Dubins(p);
                }
                sc
            }
            "quadrotor" => {
                if self.dubins.is_some() {
                    return Err(Error::config(
                        "system = \"quadrotor\" but a [dubins] table is present",
                    ));
                }
                let mut sc = Scenario::default_quadrotor();
                if let Some(p) = self.quadrotor {
                    sc.system = SystemConfig::Quadrotor(p);
                }
                sc
            }
            other => {
                return Err(Error::config(format!(
                    "unknown system {other:?}; expected \"dubins\" or \"quadrotor\""
                )))
            }
        };
        let mut sc = base;
        if let Some(v) = self.dt {
            sc.dt = v;
        }
        if let Some(v) = self.horizon {
            sc.horizon = v;
        }
        if let Some(v) = self.duration {
            sc.duration = v;
        }
        if let Some(v) = self.effort_weight {
            sc.effort_weight = v;
        }
        if let Some(p) = self.penalty {
            sc.penalty = p;
        }
        if let Some(c) = self.cbf {
            if let Some(a) = c.alpha {
                sc.cbf.alpha = a;
            }
            if let Some(g) = c.gamma {
                sc.cbf.gamma = g;
            }
        }
        if let Some(m) = self.mppi {
            if let Some(k) = m.num_samples {
                sc.mppi.num_samples = k;
            }
            if let Some(ns) = m.noise_std {
                sc.mppi.noise_std = ns;
            }
            if let Some(t) = m.temperature {
                sc.mppi.temperature = t;
            }
        }
        if let Some(l) = self.lbfgs {
            sc.lbfgs = l;
        }
        if let Some(s) = self.sampler {
            sc.sampler = s;
        }
        match (self.seeds, self.episodes, self.base_seed) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(Error::config(
                    "give either an explicit seeds list or episodes/base_seed, not both",
                ))
            }
            (Some(seeds), None, None) => sc.seeds = seeds,
            (None, episodes, base_seed) => {
                let n = episodes.unwrap_or(20) as u64;
                let base = base_seed.unwrap_or(0);
                sc.seeds = (base..base.saturating_add(n)).collect();
            }
        }
        Ok(sc)
    }
}
