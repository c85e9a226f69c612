//! The two benchmark plants: a constant-speed Dubins car dodging circular
//! obstacles, and a planar quadrotor confined to a square room.
//!
//! Each system provides its control-affine model (with analytic Jacobians), a
//! safety margin function `l(x)` whose zero super-level set is the safe set,
//! and shares the same goal-tracking running cost `r(x)` — the Euclidean
//! distance from the position coordinates to the goal.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};

/// A circular obstacle in the Dubins benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Dubins car: state `(x, y, θ)`, scalar control `u` (turn rate), fixed
/// forward speed.
///
/// ```text
///     f(x) = (v cos θ, v sin θ, 0),   g(x) = (0, 0, 1)^T
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DubinsParams {
    /// Forward speed `v`.
    pub speed: f64,
    /// Symmetric turn-rate bound: `u ∈ [-limit, limit]`.
    pub turn_rate_limit: f64,
    pub goal: [f64; 2],
    pub obstacles: Vec<Obstacle>,
}

impl Default for DubinsParams {
    fn default() -> Self {
        DubinsParams {
            speed: 1.0,
            turn_rate_limit: 2.0,
            goal: [0.5, 0.0],
            obstacles: vec![Obstacle {
                x: 0.0,
                y: 0.0,
                radius: 0.25,
            }],
        }
    }
}

impl DubinsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::config("dubins speed must be positive"));
        }
        if !(self.turn_rate_limit > 0.0 && self.turn_rate_limit.is_finite()) {
            return Err(Error::config("dubins turn_rate_limit must be positive"));
        }
        if self.goal.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("dubins goal must be finite"));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if !(ob.radius > 0.0 && ob.radius.is_finite()) {
                return Err(Error::config(format!("obstacle {i} radius must be positive")));
            }
            if !(ob.x.is_finite() && ob.y.is_finite()) {
                return Err(Error::config(format!("obstacle {i} center must be finite")));
            }
            let d = ((self.goal[0] - ob.x).powi(2) + (self.goal[1] - ob.y).powi(2)).sqrt();
            if d <= ob.radius {
                return Err(Error::config(format!(
                    "goal lies inside obstacle {i}; no safe trajectory can reach it"
                )));
            }
        }
        Ok(())
    }
}

/// Planar quadrotor: state `(x, z, θ, ẋ, ż, ω)`, controls `(F, M)`.
///
/// ```text
///     f(x) = (ẋ, ż, ω, 0, -g, 0)
///     g(x) rows 4..6 = [cos θ / m, 0; sin θ / m, 0; 0, 1/J]
/// ```
///
/// Thrust acts along `(cos θ, sin θ)`, so the hover attitude (thrust opposing
/// gravity) is `θ = π/2` with `F = m g`. The craft flies inside a square room
/// `|x| ≤ w`, `|z| ≤ w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia: f64,
    pub gravity: f64,
    /// Room half-extent `w`: walls at `x = ±w`, `z = ±w`.
    pub room_half_extent: f64,
    /// Goal position `(x, z)`.
    pub goal: [f64; 2],
    /// Thrust range `[F_min, F_max]`.
    pub thrust_bounds: [f64; 2],
    /// Symmetric torque bound: `M ∈ [-limit, limit]`.
    pub torque_limit: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        let mass = 1.0;
        let gravity = 9.81;
        QuadrotorParams {
            mass,
            inertia: 1.0,
            gravity,
            room_half_extent: 0.9,
            goal: [0.0, 0.0],
            thrust_bounds: [0.0, 2.0 * mass * gravity],
            torque_limit: 4.0,
        }
    }
}

impl QuadrotorParams {
    /// Attitude at which thrust opposes gravity.
    pub fn hover_attitude() -> f64 {
        std::f64::consts::FRAC_PI_2
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mass", self.mass),
            ("inertia", self.inertia),
            ("gravity", self.gravity),
            ("room_half_extent", self.room_half_extent),
            ("torque_limit", self.torque_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("quadrotor {name} must be positive")));
            }
        }
        let [lo, hi] = self.thrust_bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("quadrotor thrust_bounds must be a non-empty range"));
        }
        if lo < 0.0 {
            return Err(Error::config("quadrotor thrust cannot be negative"));
        }
        let w = self.room_half_extent;
        if self.goal.iter().any(|c| !c.is_finite() || c.abs() >= w) {
            return Err(Error::config("quadrotor goal must lie strictly inside the room"));
        }
        Ok(())
    }
}

/// Builds the Dubins model with analytic Jacobians.
pub fn dubins_model(params: &DubinsParams) -> Result<SystemModel> {
    params.validate()?;
    let v = params.speed;
    let limit = params.turn_rate_limit;
    SystemModel::new(
        3,
        1,
        vec![(-limit, limit)],
        Arc::new(move |x: &DVector<f64>| {
            let theta = x[2];
            DVector::from_vec(vec![v * theta.cos(), v * theta.sin(), 0.0])
        }),
        Arc::new(|_x: &DVector<f64>| DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0])),
        Arc::new(move |x: &DVector<f64>| {
            let theta = x[2];
            let mut j = DMatrix::zeros(3, 3);
            j[(0, 2)] = -v * theta.sin();
            j[(1, 2)] = v * theta.cos();
            j
        }),
        Arc::new(|_x: &DVector<f64>, _u: &DVector<f64>| DMatrix::zeros(3, 3)),
    )
}

/// Builds the planar-quadrotor model with analytic Jacobians.
pub fn quadrotor_model(params: &QuadrotorParams) -> Result<SystemModel> {
    params.validate()?;
    let m = params.mass;
    let j_inertia = params.inertia;
    let grav = params.gravity;
    let [f_lo, f_hi] = params.thrust_bounds;
    let torque = params.torque_limit;
    SystemModel::new(
        6,
        2,
        vec![(f_lo, f_hi), (-torque, torque)],
        Arc::new(move |x: &DVector<f64>| {
            DVector::from_vec(vec![x[3], x[4], x[5], 0.0, -grav, 0.0])
        }),
        Arc::new(move |x: &DVector<f64>| {
            let theta = x[2];
            let mut g = DMatrix::zeros(6, 2);
            g[(3, 0)] = theta.cos() / m;
            g[(4, 0)] = theta.sin() / m;
            g[(5, 1)] = 1.0 / j_inertia;
            g
        }),
        Arc::new(move |_x: &DVector<f64>| {
            let mut jf = DMatrix::zeros(6, 6);
            jf[(0, 3)] = 1.0;
            jf[(1, 4)] = 1.0;
            jf[(2, 5)] = 1.0;
            jf
        }),
        Arc::new(move |x: &DVector<f64>, u: &DVector<f64>| {
            let theta = x[2];
            let f = u[0];
            let mut jg = DMatrix::zeros(6, 6);
            jg[(3, 2)] = -f * theta.sin() / m;
            jg[(4, 2)] = f * theta.cos() / m;
            jg
        }),
    )
}

/// Safety margin for the Dubins benchmark: distance to the nearest obstacle
/// boundary, positive outside. With no obstacles every state is safe.
pub fn dubins_constraint_l(x: &DVector<f64>, params: &DubinsParams) -> f64 {
    params
        .obstacles
        .iter()
        .map(|ob| ((x[0] - ob.x).powi(2) + (x[1] - ob.y).powi(2)).sqrt() - ob.radius)
        .fold(f64::INFINITY, f64::min)
}

/// Subgradient of [`dubins_constraint_l`] with respect to the state. At ties
/// the first nearest obstacle is used; at an obstacle center (where the
/// distance is not differentiable) the zero subgradient is returned.
pub fn dubins_constraint_grad(x: &DVector<f64>, params: &DubinsParams) -> DVector<f64> {
    let mut grad = DVector::zeros(3);
    let mut best = f64::INFINITY;
    let mut nearest: Option<&Obstacle> = None;
    for ob in &params.obstacles {
        let l = ((x[0] - ob.x).powi(2) + (x[1] - ob.y).powi(2)).sqrt() - ob.radius;
        if l < best {
            best = l;
            nearest = Some(ob);
        }
    }
    if let Some(ob) = nearest {
        let dx = x[0] - ob.x;
        let dy = x[1] - ob.y;
        let d = (dx * dx + dy * dy).sqrt();
        if d > 1e-12 {
            grad[0] = dx / d;
            grad[1] = dy / d;
        }
    }
    grad
}

/// Wall clearances for the quadrotor, in fixed order
/// `[ceiling (w - z), floor (w + z), right (w - x), left (w + x)]`.
pub fn quad_wall_margins(x: &DVector<f64>, params: &QuadrotorParams) -> [f64; 4] {
    let w = params.room_half_extent;
    [w - x[1], w + x[1], w - x[0], w + x[0]]
}

/// Safety margin for the quadrotor benchmark: the smallest wall clearance.
pub fn quad_constraint_l(x: &DVector<f64>, params: &QuadrotorParams) -> f64 {
    quad_wall_margins(x, params)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Subgradient of [`quad_constraint_l`]; at ties the first wall in the fixed
/// ordering wins.
pub fn quad_constraint_grad(x: &DVector<f64>, params: &QuadrotorParams) -> DVector<f64> {
    let margins = quad_wall_margins(x, params);
    let mut idx = 0;
    for (i, m) in margins.iter().enumerate() {
        if *m < margins[idx] {
            idx = i;
        }
    }
    let mut grad = DVector::zeros(6);
    match idx {
        0 => grad[1] = -1.0, // ceiling: d(w - z)/dz
        1 => grad[1] = 1.0,  // floor
        2 => grad[0] = -1.0, // right
        _ => grad[0] = 1.0,  // left
    }
    grad
}

/// Goal-tracking running cost: Euclidean distance of the position coordinates
/// (the first two state components for both benchmark systems) to the goal.
pub fn running_cost(x: &DVector<f64>, goal: [f64; 2]) -> f64 {
    let dx = x[0] - goal[0];
    let dy = x[1] - goal[1];
    (dx * dx + dy * dy).sqrt()
}

/// Subgradient of [`running_cost`]; zero at the goal itself.
pub fn running_cost_grad(x: &DVector<f64>, goal: [f64; 2]) -> DVector<f64> {
    let mut grad = DVector::zeros(x.len());
    let dx = x[0] - goal[0];
    let dy = x[1] - goal[1];
    let d = (dx * dx + dy * dy).sqrt();
    if d > 1e-12 {
        grad[0] = dx / d;
        grad[1] = dy / d;
    }
    grad
}

/// A benchmark system choice together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemConfig {
    Dubins(DubinsParams),
    Quadrotor(QuadrotorParams),
}

impl SystemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SystemConfig::Dubins(_) => "dubins",
            SystemConfig::Quadrotor(_) => "quadrotor",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SystemConfig::Dubins(_) => 3,
            SystemConfig::Quadrotor(_) => 6,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            SystemConfig::Dubins(_) => 1,
            SystemConfig::Quadrotor(_) => 2,
        }
    }

    pub fn state_labels(&self) -> &'static [&'static str] {
        match self {
            SystemConfig::Dubins(_) => &["x", "y", "theta"],
            SystemConfig::Quadrotor(_) => &["x", "z", "theta", "vx", "vz", "omega"],
        }
    }

    pub fn control_labels(&self) -> &'static [&'static str] {
        match self {
            SystemConfig::Dubins(_) => &["u1"],
            SystemConfig::Quadrotor(_) => &["thrust", "torque"],
        }
    }

    /// Labels for the per-constraint barrier diagnostics exported with
    /// trajectories.
    pub fn barrier_labels(&self) -> Vec<String> {
        match self {
            SystemConfig::Dubins(p) => (0..p.obstacles.len()).map(|i| format!("h_obs{i}")).collect(),
            SystemConfig::Quadrotor(_) => ["h_ceiling", "h_floor", "h_right", "h_left"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    pub fn build_model(&self) -> Result<SystemModel> {
        match self {
            SystemConfig::Dubins(p) => dubins_model(p),
            SystemConfig::Quadrotor(p) => quadrotor_model(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SystemConfig::Dubins(p) => p.validate(),
            SystemConfig::Quadrotor(p) => p.validate(),
        }
    }

    pub fn goal(&self) -> [f64; 2] {
        match self {
            SystemConfig::Dubins(p) => p.goal,
            SystemConfig::Quadrotor(p) => p.goal,
        }
    }

    pub fn constraint(&self, x: &DVector<f64>) -> f64 {
        match self {
            SystemConfig::Dubins(p) => dubins_constraint_l(x, p),
            SystemConfig::Quadrotor(p) => quad_constraint_l(x, p),
        }
    }

    pub fn constraint_grad(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            SystemConfig::Dubins(p) => dubins_constraint_grad(x, p),
            SystemConfig::Quadrotor(p) => quad_constraint_grad(x, p),
        }
    }

    /// Per-constraint clearance at `x`, one entry per [`Self::barrier_labels`]
    /// item: distance to each obstacle boundary for the car, signed distance
    /// to each wall for the quadrotor. `l(x)` is the minimum of these.
    pub fn constraint_margins(&self, x: &DVector<f64>) -> Vec<f64> {
        match self {
            SystemConfig::Dubins(p) => p
                .obstacles
                .iter()
                .map(|ob| ((x[0] - ob.x).powi(2) + (x[1] - ob.y).powi(2)).sqrt() - ob.radius)
                .collect(),
            SystemConfig::Quadrotor(p) => quad_wall_margins(x, p).to_vec(),
        }
    }

    /// A bounds-feasible control that holds the system near its operating
    /// point: zero turn rate for the car, hover thrust for the quadrotor.
    pub fn neutral_control(&self) -> DVector<f64> {
        match self {
            SystemConfig::Dubins(_) => DVector::zeros(1),
            SystemConfig::Quadrotor(p) => DVector::from_vec(vec![p.mass * p.gravity, 0.0]),
        }
    }

    /// Per-channel `[lo, hi]` control bounds.
    pub fn control_bounds(&self) -> Vec<(f64, f64)> {
        match self {
            SystemConfig::Dubins(p) => vec![(-p.turn_rate_limit, p.turn_rate_limit)],
            SystemConfig::Quadrotor(p) => vec![
                (p.thrust_bounds[0], p.thrust_bounds[1]),
                (-p.torque_limit, p.torque_limit),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{euler_step, rollout, step_jacobians};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn dubins_step_heading_up_moves_in_y_only() {
        let p = DubinsParams::default();
        let model = dubins_model(&p).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, FRAC_PI_2]);
        let u = DVector::from_vec(vec![1.0]);
        let next = euler_step(&model, &x, &u, 0.05);
        assert!(next[0].abs() < 1e-16);
        assert_relative_eq!(next[1], 0.05, max_relative = 1e-12);
        assert_relative_eq!(next[2], FRAC_PI_2 + 0.05, max_relative = 1e-12);
    }

    #[test]
    fn dubins_straight_rollout_covers_unit_distance() {
        let p = DubinsParams::default();
        let model = dubins_model(&p).unwrap();
        let x0 = DVector::zeros(3);
        let controls = vec![DVector::zeros(1); 20];
        let states = rollout(&model, &x0, &controls, 0.05);
        assert_eq!(states.len(), 21);
        let last = states.last().unwrap();
        assert_relative_eq!(last[0], 1.0, epsilon = 1e-12);
        assert!(last[1].abs() < 1e-15 && last[2].abs() < 1e-15);
    }

    #[test]
    fn quadrotor_hover_is_a_fixed_point() {
        let p = QuadrotorParams::default();
        let model = quadrotor_model(&p).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, QuadrotorParams::hover_attitude(), 0.0, 0.0, 0.0]);
        let u = SystemConfig::Quadrotor(p.clone()).neutral_control();
        let next = euler_step(&model, &x, &u, 0.05);
        for i in 0..6 {
            assert!(
                (next[i] - x[i]).abs() < 1e-15,
                "component {i} drifted: {} -> {}",
                x[i],
                next[i]
            );
        }
    }

    #[test]
    fn quadrotor_accelerations_at_hover_attitude() {
        // At θ = π/2 all thrust is vertical: (ẍ, z̈, θ̈) = (0, F/m - g, M/J).
        let p = QuadrotorParams::default();
        let model = quadrotor_model(&p).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]);
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let mut xdot = model.drift(&x);
        xdot.gemv(1.0, &model.actuation(&x), &u, 1.0);
        assert!(xdot[3].abs() < 1e-15);
        assert_relative_eq!(xdot[4], 1.0 - p.gravity, max_relative = 1e-12);
        assert!(xdot[5].abs() < 1e-15);
    }

    #[test]
    fn quadrotor_thrust_is_horizontal_at_zero_attitude() {
        // At θ = 0 thrust acts along +x and gravity is unopposed.
        let p = QuadrotorParams::default();
        let model = quadrotor_model(&p).unwrap();
        let x = DVector::zeros(6);
        let u = DVector::from_vec(vec![2.0, 0.5]);
        let mut xdot = model.drift(&x);
        xdot.gemv(1.0, &model.actuation(&x), &u, 1.0);
        assert_relative_eq!(xdot[3], 2.0, max_relative = 1e-12);
        assert_relative_eq!(xdot[4], -p.gravity, max_relative = 1e-12);
        assert_relative_eq!(xdot[5], 0.5, max_relative = 1e-12);
    }

    #[test]
    fn dubins_constraint_picks_nearest_obstacle() {
        let p = DubinsParams {
            obstacles: vec![
                Obstacle { x: 0.0, y: 0.0, radius: 0.25 },
                Obstacle { x: 1.0, y: 0.0, radius: 0.10 },
            ],
            ..DubinsParams::default()
        };
        let x = DVector::from_vec(vec![0.7, 0.0, 0.0]);
        // Distances: 0.7 - 0.25 = 0.45 and 0.3 - 0.1 = 0.2.
        assert_relative_eq!(dubins_constraint_l(&x, &p), 0.2, max_relative = 1e-12);
        let g = dubins_constraint_grad(&x, &p);
        // Nearest is the second obstacle, to the +x side of it is -x of us.
        assert_relative_eq!(g[0], -1.0, max_relative = 1e-12);
        assert!(g[1].abs() < 1e-15 && g[2].abs() < 1e-15);
    }

    #[test]
    fn dubins_constraint_without_obstacles_is_unbounded() {
        let p = DubinsParams {
            obstacles: vec![],
            ..DubinsParams::default()
        };
        let x = DVector::zeros(3);
        assert_eq!(dubins_constraint_l(&x, &p), f64::INFINITY);
        assert_eq!(dubins_constraint_grad(&x, &p), DVector::zeros(3));
    }

    #[test]
    fn quad_constraint_matches_hand_margins() {
        let p = QuadrotorParams::default();
        let x = DVector::from_vec(vec![0.5, -0.8, 0.0, 0.0, 0.0, 0.0]);
        let margins = quad_wall_margins(&x, &p);
        assert_relative_eq!(margins[0], 1.7, max_relative = 1e-12);
        assert_relative_eq!(margins[1], 0.1, max_relative = 1e-12);
        assert_relative_eq!(margins[2], 0.4, max_relative = 1e-12);
        assert_relative_eq!(margins[3], 1.4, max_relative = 1e-12);
        assert_relative_eq!(quad_constraint_l(&x, &p), 0.1, max_relative = 1e-12);
        // Nearest wall is the floor: moving up (+z) increases clearance.
        let g = quad_constraint_grad(&x, &p);
        assert_eq!(g[1], 1.0);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn quad_constraint_is_zero_on_walls() {
        let p = QuadrotorParams::default();
        for state in [
            vec![0.9, 0.0, 0.0, 0.0, 0.0, 0.0],
            vec![-0.9, 0.3, 0.0, 0.0, 0.0, 0.0],
            vec![0.2, 0.9, 0.0, 0.0, 0.0, 0.0],
            vec![0.2, -0.9, 0.0, 0.0, 0.0, 0.0],
        ] {
            let x = DVector::from_vec(state);
            assert!(quad_constraint_l(&x, &p).abs() < 1e-15);
        }
    }

    #[test]
    fn constraint_sign_matches_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dubins = DubinsParams::default();
        let quad = QuadrotorParams::default();
        for _ in 0..1000 {
            let x = DVector::from_vec(vec![
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-PI..PI),
            ]);
            let inside = dubins.obstacles.iter().any(|ob| {
                ((x[0] - ob.x).powi(2) + (x[1] - ob.y).powi(2)).sqrt() < ob.radius
            });
            assert_eq!(dubins_constraint_l(&x, &dubins) < 0.0, inside);

            let q = DVector::from_vec(vec![
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-PI..PI),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            ]);
            let in_room = q[0].abs() < 0.9 && q[1].abs() < 0.9;
            assert_eq!(quad_constraint_l(&q, &quad) > 0.0, in_room);
        }
    }

    #[test]
    fn running_cost_examples() {
        let x = DVector::from_vec(vec![0.5, -0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(running_cost(&x, [0.0, 0.0]), 0.5_f64.sqrt(), max_relative = 1e-12);
        let at_goal = DVector::from_vec(vec![0.5, 0.0, 1.0]);
        assert_eq!(running_cost(&at_goal, [0.5, 0.0]), 0.0);
        assert_eq!(running_cost_grad(&at_goal, [0.5, 0.0]), DVector::zeros(3));
    }

    #[test]
    fn constraint_and_cost_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dubins = DubinsParams::default();
        let quad = QuadrotorParams::default();
        let eps = 1e-6;
        for _ in 0..200 {
            let x = DVector::from_vec(vec![
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-PI..PI),
            ]);
            // Keep away from the obstacle center and the goal, where the
            // distance functions are not differentiable.
            if x.norm() < 1e-2 || running_cost(&x, dubins.goal) < 1e-2 {
                continue;
            }
            for j in 0..2 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += eps;
                xm[j] -= eps;
                let fd_l =
                    (dubins_constraint_l(&xp, &dubins) - dubins_constraint_l(&xm, &dubins)) / (2.0 * eps);
                assert_relative_eq!(dubins_constraint_grad(&x, &dubins)[j], fd_l, epsilon = 1e-7);
                let fd_r = (running_cost(&xp, dubins.goal) - running_cost(&xm, dubins.goal)) / (2.0 * eps);
                assert_relative_eq!(running_cost_grad(&x, dubins.goal)[j], fd_r, epsilon = 1e-7);
            }

            let q = DVector::from_vec(vec![
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-0.8..0.8),
                rng.gen_range(-PI..PI),
                0.0,
                0.0,
                0.0,
            ]);
            let margins = quad_wall_margins(&q, &quad);
            let sorted = {
                let mut m = margins;
                m.sort_by(f64::total_cmp);
                m
            };
            // Skip states where two walls tie (kink of the min).
            if sorted[1] - sorted[0] < 1e-3 {
                continue;
            }
            for j in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += eps;
                qm[j] -= eps;
                let fd = (quad_constraint_l(&qp, &quad) - quad_constraint_l(&qm, &quad)) / (2.0 * eps);
                assert_relative_eq!(quad_constraint_grad(&q, &quad)[j], fd, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn model_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dubins = dubins_model(&DubinsParams::default()).unwrap();
        let quad = quadrotor_model(&QuadrotorParams::default()).unwrap();
        let dt = 0.05;
        let eps = 1e-6;
        for (model, n, m) in [(&dubins, 3usize, 1usize), (&quad, 6, 2)] {
            for _ in 0..50 {
                let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let u = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
                let (a, b) = step_jacobians(model, &x, &u, dt);
                for j in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += eps;
                    xm[j] -= eps;
                    let col =
                        (euler_step(model, &xp, &u, dt) - euler_step(model, &xm, &u, dt)) / (2.0 * eps);
                    for i in 0..n {
                        assert!((a[(i, j)] - col[i]).abs() < 1e-8);
                    }
                }
                for j in 0..m {
                    let mut up = u.clone();
                    let mut um = u.clone();
                    up[j] += eps;
                    um[j] -= eps;
                    let col =
                        (euler_step(model, &x, &up, dt) - euler_step(model, &x, &um, dt)) / (2.0 * eps);
                    for i in 0..n {
                        assert!((b[(i, j)] - col[i]).abs() < 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn goal_inside_obstacle_is_rejected() {
        let p = DubinsParams {
            goal: [0.1, 0.0],
            ..DubinsParams::default()
        };
        assert!(p.validate().is_err());
    }
}
