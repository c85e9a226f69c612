//! Plain-text result export: metrics summary, timing report, scene geometry,
//! and per-episode trajectory CSVs.
//!
//! Everything except `timings.txt` is a pure function of the batch data, so
//! re-running an identical configuration re-creates those files byte for
//! byte. Timing is hardware-dependent by nature and is therefore quarantined
//! in its own file rather than allowed to contaminate the summary.
//!
//! Floats are printed with the standard shortest-round-trip formatting:
//! parsing a value back from any exported file recovers the original `f64`
//! exactly, which is what lets the safety flag and the cumulative cost be
//! recomputed from a trajectory file alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::BatchResult;
use crate::scenario::Scenario;
use crate::systems::SystemConfig;

/// Writes the full result set for one scenario run into `out_dir`:
///
/// * `summary.txt` — safety rate, mean cost over safe episodes, and one
///   line per episode (seed, cost, safe flag, minimum margin, filter
///   interventions) for each method; deterministic.
/// * `timings.txt` — mean planner and filter times per control step;
///   hardware-dependent, hence a separate file.
/// * `geometry.txt` — goal and obstacle/wall geometry for plotting.
/// * `trajectories/<method>_seed<seed>.csv` — one file per episode with
///   columns `t, states…, controls…, l, clearances…, filter_delta`. The
///   final row has no control (none was applied after the last state), so
///   its control and filter-delta fields are empty.
///
/// Returns the written paths in a fixed order. The directory is created if
/// missing; existing files are overwritten.
pub fn export_results(
    scenario: &Scenario,
    batches: &[BatchResult],
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;

    let mut written = Vec::new();
    for (name, contents) in [
        ("summary.txt", render_summary(scenario, batches)),
        ("timings.txt", render_timings(batches)),
        ("geometry.txt", render_geometry(&scenario.system)),
    ] {
        let path = out_dir.join(name);
        write_file(&path, &contents)?;
        written.push(path);
    }

    let any_episode = batches.iter().any(|b| !b.episodes.is_empty());
    if any_episode {
        let traj_dir = out_dir.join("trajectories");
        create_dir(&traj_dir)?;
        for batch in batches {
            for episode in &batch.episodes {
                let path =
                    traj_dir.join(format!("{}_seed{}.csv", batch.method.name(), episode.seed));
                write_file(&path, &trajectory_csv(scenario, episode))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// The metrics summary document (contents of `summary.txt`).
pub fn render_summary(scenario: &Scenario, batches: &[BatchResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", scenario.system.name());
    let _ = writeln!(s, "dt: {}", scenario.dt);
    let _ = writeln!(s, "steps per episode: {}", scenario.steps());
    let _ = writeln!(s, "planning horizon: {}", scenario.horizon);
    for batch in batches {
        let _ = writeln!(s);
        let _ = writeln!(s, "method: {}", batch.method.name());
        let n = batch.episodes.len();
        let safe = batch.episodes.iter().filter(|e| e.safe).count();
        let _ = writeln!(s, "safety rate: {} % ({safe}/{n} episodes)", batch.safety_rate());
        match batch.mean_cost_over_safe() {
            Some(c) => {
                let _ = writeln!(s, "mean cost over safe episodes: {c}");
            }
            None => {
                let _ = writeln!(s, "mean cost over safe episodes: undefined (no safe episodes)");
            }
        }
        let _ = writeln!(
            s,
            "computation time: see timings.txt (hardware-dependent, kept out of this file)"
        );
        let _ = writeln!(s, "filter interventions: {}", batch.total_interventions());
        let _ = writeln!(s, "episodes:");
        for e in &batch.episodes {
            let _ = write!(
                s,
                "  seed={} cost={} safe={} min_l={} interventions={}",
                e.seed,
                e.cumulative_cost,
                if e.safe { "yes" } else { "no" },
                e.min_constraint,
                e.filter_interventions,
            );
            if let Some(msg) = &e.failure {
                let _ = write!(s, " failure={msg:?}");
            }
            let _ = writeln!(s);
        }
    }
    s
}

/// The timing report (contents of `timings.txt`).
pub fn render_timings(batches: &[BatchResult]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Mean wall-clock times per control step, in seconds.");
    let _ = writeln!(s, "# Hardware-dependent; excluded from summary.txt so that");
    let _ = writeln!(s, "# identical reruns produce identical summaries.");
    for batch in batches {
        let _ = writeln!(s);
        let _ = writeln!(s, "method: {}", batch.method.name());
        let _ = writeln!(s, "mean solve time: {}", batch.mean_solve_time());
        let _ = writeln!(s, "mean filter time: {}", batch.mean_filter_time());
    }
    s
}

/// Scene geometry for plotting (contents of `geometry.txt`).
pub fn render_geometry(system: &SystemConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "system: {}", system.name());
    let goal = system.goal();
    let _ = writeln!(s, "goal: {} {}", goal[0], goal[1]);
    match system {
        SystemConfig::Dubins(p) => {
            for ob in &p.obstacles {
                let _ = writeln!(s, "obstacle: center {} {} radius {}", ob.x, ob.y, ob.radius);
            }
        }
        SystemConfig::Quadrotor(p) => {
            let w = p.room_half_extent;
            let _ = writeln!(s, "room half-extent: {w}");
            let _ = writeln!(s, "wall: x = {}", -w);
            let _ = writeln!(s, "wall: x = {w}");
            let _ = writeln!(s, "wall: z = {}", -w);
            let _ = writeln!(s, "wall: z = {w}");
        }
    }
    s
}

/// One episode as CSV: header then one row per recorded state.
///
/// Row `k` holds `t = k·dt`, the state, the control applied *at* that state
/// (empty fields on the final row), the safety margin `l`, the
/// per-constraint clearances, and the filter's `‖u − u_plan‖` for the step.
pub fn trajectory_csv(scenario: &Scenario, episode: &crate::harness::EpisodeResult) -> String {
    let system = &scenario.system;
    let traj = &episode.trajectory;
    let mut s = String::new();

    let _ = write!(s, "t");
    for label in system.state_labels() {
        let _ = write!(s, ",{label}");
    }
    for label in system.control_labels() {
        let _ = write!(s, ",{label}");
    }
    let _ = write!(s, ",l");
    for label in system.barrier_labels() {
        let _ = write!(s, ",{label}");
    }
    let _ = writeln!(s, ",filter_delta");

    let n_controls = system.control_dim();
    for (k, x) in traj.states.iter().enumerate() {
        let _ = write!(s, "{}", k as f64 * scenario.dt);
        for v in x.iter() {
            let _ = write!(s, ",{v}");
        }
        if k < traj.controls.len() {
            for v in traj.controls[k].iter() {
                let _ = write!(s, ",{v}");
            }
        } else {
            for _ in 0..n_controls {
                let _ = write!(s, ",");
            }
        }
        let _ = write!(s, ",{}", traj.constraint_values[k]);
        for v in &traj.barrier_values[k] {
            let _ = write!(s, ",{v}");
        }
        if k < traj.filter_deltas.len() {
            let _ = writeln!(s, ",{}", traj.filter_deltas[k]);
        } else {
            let _ = writeln!(s, ",");
        }
    }
    s
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
