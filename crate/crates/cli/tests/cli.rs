use std::path::Path;
use std::process::{Command, Output};

use nanodetect::report::from_csv;

const SCENARIO: &str = "\
name = matern_m5
params.nm_radius = 3
deploy.kind = pcp
deploy.parent_density = 1e-6
deploy.mean_daughters = 5
deploy.spread = matern
deploy.cluster_radius = 10
methods = exact, upper_bound, simulation
t = 1:1:3
sim.realizations = 300
";

fn nanodetect(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nanodetect"))
        .args(args)
        .current_dir(dir)
        .env_remove("NANODETECT_SEED")
        .output()
        .expect("binary runs")
}

fn scenario_dir(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.conf"), text).unwrap();
    dir
}

#[test]
fn output_independent_of_thread_count() {
    let dir = scenario_dir(SCENARIO);
    let one = nanodetect(&["run", "s.conf", "--threads", "1"], dir.path());
    let four = nanodetect(&["run", "s.conf", "--threads", "4"], dir.path());
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, four.stdout);
    let rows = from_csv(std::str::from_utf8(&one.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    assert!(rows.iter().filter(|r| r.method == "simulation").all(|r| r.n_samples == Some(300)));
}

#[test]
fn seed_flag_and_environment() {
    let dir = scenario_dir(SCENARIO);
    let base = nanodetect(&["run", "s.conf"], dir.path()).stdout;
    let flagged = nanodetect(&["run", "s.conf", "--seed", "99"], dir.path()).stdout;
    assert_ne!(base, flagged);
    let env = Command::new(env!("CARGO_BIN_EXE_nanodetect"))
        .args(["run", "s.conf"])
        .current_dir(dir.path())
        .env("NANODETECT_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(env.stdout, flagged);
    // A seed in the file wins over the environment.
    let dir = scenario_dir(&format!("{SCENARIO}sim.seed = 1\n"));
    let env = Command::new(env!("CARGO_BIN_EXE_nanodetect"))
        .args(["run", "s.conf"])
        .current_dir(dir.path())
        .env("NANODETECT_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(env.stdout, base);
}

#[test]
fn exit_codes() {
    let dir = scenario_dir("deploy.kind = pcp\nbogus = 1\n");
    assert_eq!(nanodetect(&["run", "s.conf"], dir.path()).status.code(), Some(2));
    assert_eq!(nanodetect(&["validate", "s.conf"], dir.path()).status.code(), Some(2));
    assert_eq!(nanodetect(&["run", "missing.conf"], dir.path()).status.code(), Some(2));
    assert_eq!(nanodetect(&["preset", "fig99"], dir.path()).status.code(), Some(4));

    // approx is undefined for an unclustered deployment: rows fail, run continues.
    let dir = scenario_dir(
        "params.nm_radius = 3\ndeploy.kind = ppp\ndeploy.density = 1e-5\nt = 1, 2\nmethods = exact, approx\n",
    );
    let out = nanodetect(&["run", "s.conf"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let rows = from_csv(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].value.is_some() && rows[3].value.is_none());
}

#[test]
fn validate_reports_field() {
    let dir = scenario_dir(&SCENARIO.replace("params.nm_radius = 3", "params.nm_radius = -3"));
    let out = nanodetect(&["validate", "s.conf"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2: params.nm_radius: nm_radius must be positive"), "{err}");
    let dir = scenario_dir(SCENARIO);
    let out = nanodetect(&["validate", "s.conf"], dir.path());
    assert!(out.status.success());
}

#[test]
fn sweep_writes_one_block_per_value() {
    let dir = scenario_dir(&SCENARIO.replace("exact, upper_bound, simulation", "exact"));
    let out = nanodetect(&["sweep", "s.conf", "--vary", "deploy.mean_daughters=1,5,15", "--out", "o.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = from_csv(&std::fs::read_to_string(dir.path().join("o.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[8].scenario, "matern_m5@deploy.mean_daughters=15");
    // More daughters per cluster, higher detection probability.
    assert!(rows[2].value < rows[5].value && rows[5].value < rows[8].value);
}

#[test]
fn preset_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = nanodetect(&["preset", "fig6", "--realizations", "200", "--out", "fig6.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = from_csv(&std::fs::read_to_string(dir.path().join("fig6.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 6 * 2);
    assert!(rows.iter().all(|r| r.t_seconds == 0.0));
}

#[test]
fn timing_column_is_opt_in() {
    let dir = scenario_dir(&SCENARIO.replace("exact, upper_bound, simulation", "exact"));
    let plain = nanodetect(&["run", "s.conf"], dir.path());
    let timed = nanodetect(&["run", "s.conf", "--timing"], dir.path());
    let plain = from_csv(std::str::from_utf8(&plain.stdout).unwrap()).unwrap();
    let timed = from_csv(std::str::from_utf8(&timed.stdout).unwrap()).unwrap();
    assert!(plain.iter().all(|r| r.wall_ms.is_none()));
    assert!(timed.iter().all(|r| r.wall_ms.is_some()));
}
