//! End-to-end tests of the `safempc` binary: exit codes, exports, and
//! rerun determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use safempc::Scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_safempc"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// A scenario small enough that a four-method comparison stays fast.
fn small_dubins_scenario(dir: &Path) -> PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "system = \"dubins\"\nduration = 0.5\nhorizon = 10\nepisodes = 2\n\n[mppi]\nnum_samples = 64\n",
    )
    .unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn shipped_scenario_files_match_the_builtin_defaults() {
    let car = Scenario::load(shipped("dubins.toml")).unwrap();
    assert_eq!(format!("{car:?}"), format!("{:?}", Scenario::default_dubins()));
    let quad = Scenario::load(shipped("quadrotor.toml")).unwrap();
    assert_eq!(
        format!("{quad:?}"),
        format!("{:?}", Scenario::default_quadrotor())
    );
}

#[test]
fn run_exports_results_and_reports_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_dubins_scenario(tmp.path());
    let out_dir = tmp.path().join("results");
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--method", "gmpc-cbf", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("safety rate:"), "{text}");
    assert!(text.contains("seed=0"), "{text}");
    assert!(out_dir.join("summary.txt").exists());
    assert!(out_dir.join("timings.txt").exists());
    assert!(out_dir.join("geometry.txt").exists());
    assert!(out_dir.join("trajectories/gmpc-cbf_seed0.csv").exists());
    assert!(out_dir.join("trajectories/gmpc-cbf_seed1.csv").exists());
}

#[test]
fn episode_and_seed_overrides_pick_the_seed_range() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_dubins_scenario(tmp.path());
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--method", "gmpc", "--episodes", "2", "--seed", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("seed=5"), "{text}");
    assert!(text.contains("seed=6"), "{text}");
    assert!(!text.contains("seed=0"), "{text}");
}

#[test]
fn compare_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_dubins_scenario(tmp.path());
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    let mut tables = Vec::new();
    for dir in &dirs {
        let out = bin()
            .args(["compare", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        tables.push(stdout(&out));
    }
    for method in ["gmpc", "mppi", "mppi-cbf", "gmpc-cbf"] {
        assert!(tables[0].contains(method), "{}", tables[0]);
    }

    // The metrics summary, the geometry, and every trajectory file must be
    // byte-identical across reruns. Timing lives in timings.txt precisely
    // because it never can be.
    for name in ["summary.txt", "geometry.txt"] {
        assert_eq!(
            fs::read(dirs[0].join(name)).unwrap(),
            fs::read(dirs[1].join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
    let mut csvs: Vec<PathBuf> = fs::read_dir(dirs[0].join("trajectories"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    csvs.sort();
    assert_eq!(csvs.len(), 8, "4 methods x 2 seeds");
    for a in csvs {
        let b = dirs[1].join("trajectories").join(a.file_name().unwrap());
        assert_eq!(
            fs::read(&a).unwrap(),
            fs::read(&b).unwrap(),
            "{} differs between reruns",
            a.display()
        );
    }
}

#[test]
fn unknown_scenario_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("typo.toml");
    fs::write(&path, "system = \"dubins\"\nturbo = true\n").unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--method", "gmpc"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("turbo"), "{err}");
}

#[test]
fn unknown_method_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = small_dubins_scenario(tmp.path());
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&scenario)
        .args(["--method", "newton"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown method"));
}

#[test]
fn missing_scenario_file_is_a_config_error() {
    let out = bin()
        .args(["run", "--scenario", "/nonexistent/nowhere.toml", "--method", "gmpc"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nowhere.toml"));
}

#[test]
fn all_episodes_failing_numerically_exits_3() {
    // A time step of 1e300 overflows the quadrotor's free-fall integration
    // (and the planner's preview of it) to infinity within two steps, so
    // every episode ends in a numerical failure while the configuration
    // itself is formally valid.
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("blowup.toml");
    fs::write(
        &path,
        "system = \"quadrotor\"\ndt = 1e300\nduration = 3e300\nepisodes = 2\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--method", "gmpc"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("FAILED"), "{}", stdout(&out));
    assert!(stderr(&out).contains("every episode"), "{}", stderr(&out));
}

#[test]
fn gradient_check_passes_on_both_shipped_scenarios() {
    for name in ["dubins.toml", "quadrotor.toml"] {
        let out = bin()
            .args(["check-gradients", "--scenario"])
            .arg(shipped(name))
            .args(["--points", "25"])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
        assert!(stdout(&out).contains("gradient check passed"));
    }
}
