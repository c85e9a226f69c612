//! Benchmark command line for the two-stage safe-control pipeline.
//!
//! Three subcommands:
//!
//! * `run` — one method over a scenario's seeded episodes;
//! * `compare` — all four methods side by side;
//! * `check-gradients` — the planner's adjoint gradient against a central
//!   finite-difference oracle.
//!
//! Exit codes: 0 on success, 2 for configuration problems (unreadable or
//! invalid scenario files, unknown method names), 3 when numerics failed —
//! every episode of a run ended in a planner/integration failure, or the
//! gradient check exceeded its tolerance.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use safempc::dynamics::rollout;
use safempc::gmpc::{cost_and_gradient, finite_difference_gradient, unstack_controls};
use safempc::{export_results, run_batch, BatchResult, Error, Method, Result, Scenario};

#[derive(Parser)]
#[command(
    name = "safempc",
    version,
    about = "Closed-loop benchmarks for gradient and sampling MPC, bare or wrapped in a barrier-function safety filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method over the scenario's episodes and report its metrics.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Controller to benchmark: gmpc, mppi, mppi-cbf, or gmpc-cbf.
        #[arg(long)]
        method: String,
    },
    /// Run all four methods on the same seeds and print a comparison table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compare the adjoint gradient with central finite differences at
    /// random states and control sequences.
    CheckGradients {
        /// Scenario file (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Number of probe points.
        #[arg(long, default_value_t = 100)]
        points: usize,
        /// Seed for the probe draws.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Run this many episodes instead of the scenario's seed list
    /// (seeds become base..base+N).
    #[arg(long)]
    episodes: Option<usize>,
    /// First seed for the --episodes override (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory to write summary.txt, timings.txt, geometry.txt, and
    /// per-episode trajectory CSVs into.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = Scenario::load(&self.scenario)?;
        if self.episodes.is_some() || self.seed.is_some() {
            let n = self.episodes.unwrap_or(sc.seeds.len()) as u64;
            let base = self.seed.unwrap_or(0);
            sc.seeds = (base..base.saturating_add(n)).collect();
            sc.validate()?;
        }
        Ok(sc)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical { .. } => ExitCode::from(3),
                Error::Config(_) | Error::Io { .. } => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { common, method } => {
            let method = Method::parse(&method)?;
            let sc = common.scenario()?;
            let batch = run_batch(&sc, method)?;
            print_episodes(&batch);
            print_batch_summary(&batch);
            finish(&sc, vec![batch], common.out.as_deref())
        }
        Command::Compare { common } => {
            let sc = common.scenario()?;
            let mut batches = Vec::new();
            for method in Method::all() {
                batches.push(run_batch(&sc, method)?);
            }
            print_comparison(&sc, &batches);
            finish(&sc, batches, common.out.as_deref())
        }
        Command::CheckGradients {
            scenario,
            points,
            seed,
        } => check_gradients(&scenario, points, seed),
    }
}

/// Exports (if requested) and maps "nothing succeeded" to exit code 3.
fn finish(
    sc: &Scenario,
    batches: Vec<BatchResult>,
    out: Option<&std::path::Path>,
) -> Result<ExitCode> {
    if let Some(dir) = out {
        let written = export_results(sc, &batches, dir)?;
        println!("wrote {} files under {}", written.len(), dir.display());
    }
    if batches.iter().all(|b| b.all_failed()) {
        eprintln!("error: every episode ended in a numerical failure");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn print_episodes(batch: &BatchResult) {
    for e in &batch.episodes {
        print!(
            "seed={:<4} cost={:<12.6} safe={:<3} min_l={:<12.6} interventions={}",
            e.seed,
            e.cumulative_cost,
            if e.safe { "yes" } else { "no" },
            e.min_constraint,
            e.filter_interventions,
        );
        match &e.failure {
            Some(msg) => println!("  FAILED: {msg}"),
            None => println!(),
        }
    }
}

fn print_batch_summary(batch: &BatchResult) {
    let n = batch.episodes.len();
    let safe = batch.episodes.iter().filter(|e| e.safe).count();
    println!("method: {}", batch.method.name());
    println!("safety rate: {} % ({safe}/{n})", batch.safety_rate());
    match batch.mean_cost_over_safe() {
        Some(c) => println!("mean cost over safe episodes: {c:.6}"),
        None => println!("mean cost over safe episodes: undefined (no safe episodes)"),
    }
    println!(
        "mean solve time: {:.3} ms, mean filter time: {:.3} ms",
        1e3 * batch.mean_solve_time(),
        1e3 * batch.mean_filter_time()
    );
}

fn print_comparison(sc: &Scenario, batches: &[BatchResult]) {
    println!(
        "scenario: {} ({} episodes per method, {} steps each)",
        sc.system.name(),
        sc.seeds.len(),
        sc.steps()
    );
    println!(
        "{:<10} {:>8} {:>18} {:>12} {:>12} {:>14}",
        "method", "safety%", "mean cost (safe)", "solve ms", "filter ms", "interventions"
    );
    for b in batches {
        let cost = match b.mean_cost_over_safe() {
            Some(c) => format!("{c:.6}"),
            None => "undefined".to_string(),
        };
        println!(
            "{:<10} {:>8.1} {:>18} {:>12.3} {:>12.3} {:>14}",
            b.method.name(),
            b.safety_rate(),
            cost,
            1e3 * b.mean_solve_time(),
            1e3 * b.mean_filter_time(),
            b.total_interventions()
        );
    }
}

/// Draws random (state, control-sequence) probes, skips those whose rollout
/// grazes a kink of the objective (the penalty hinge at `l = δ` or the
/// distance cone tip at the goal, where one-sided slopes make central
/// differences meaningless), and compares the adjoint gradient against
/// central differences with step 1e-6. Tolerance: relative error < 1e-5 in
/// the max norm.
fn check_gradients(scenario: &PathBuf, points: usize, seed: u64) -> Result<ExitCode> {
    if points == 0 {
        return Err(Error::config("--points must be >= 1"));
    }
    let sc = Scenario::load(scenario)?;
    let task = sc.task()?;
    let m = task.model.control_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    let mut draws = 0usize;
    while checked < points {
        draws += 1;
        if draws > 200 * points {
            return Err(Error::config(
                "could not find enough probe points away from objective kinks",
            ));
        }
        let x0 = DVector::from_fn(task.model.state_dim(), |_, _| rng.gen_range(-0.8..0.8));
        let flat = DVector::from_fn(task.horizon * m, |_, _| rng.gen_range(-1.5..1.5));
        let states = rollout(&task.model, &x0, &unstack_controls(&flat, m), task.dt);
        let clear_of_kinks = states.iter().all(|x| {
            (task.system.constraint(x) - task.penalty.margin).abs() > 1e-3
                && task.tracking_cost(x) > 1e-3
        });
        if !clear_of_kinks {
            continue;
        }
        let (_, adjoint) = cost_and_gradient(&task, &x0, &flat)?;
        let fd = finite_difference_gradient(&task, &x0, &flat, 1e-6);
        let scale = adjoint.amax().max(1e-8);
        worst = worst.max((&adjoint - &fd).amax() / scale);
        checked += 1;
    }
    println!(
        "{}: {} probe points, max relative gradient error {:.2e} (tolerance 1e-5)",
        task.system.name(),
        checked,
        worst
    );
    if worst < 1e-5 {
        println!("gradient check passed");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("error: gradient check failed");
        Ok(ExitCode::from(3))
    }
}
