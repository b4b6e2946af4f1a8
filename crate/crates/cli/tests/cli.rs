use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pagesample"));
    c.env_remove("PAGESAMPLE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn australian() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/australian")
        .display()
        .to_string()
}

#[test]
fn generate_writes_task_and_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lpm.toml");
    let o = run(&[
        "generate", "--kind", "lpm", "--n", "100", "--d", "10", "--lambda", "0.001", "--s", "0.5",
        "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists());
    let text = stdout(&o);
    assert!(text.contains("L_-"));
    assert!(text.contains("L_+-^2 empirical"));
}

#[test]
fn generate_uses_output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["generate", "--kind", "li", "--n", "20", "--d", "4", "--s", "1"])
        .env("PAGESAMPLE_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn run_writes_traces_with_flags_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "format_version = 1\nseeds = [1, 2, 3]\n\n[generator]\nkind = \"lpm\"\nn = 50\nd = 5\nlambda = 0.01\ns = 0.5\n\n[method]\nname = \"importance\"\n\n[schedule]\niterations = 100\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&[
        "run", "--config", cfg.to_str().unwrap(), "--seeds", "4,5", "--method", "nice", "--tau", "3",
        "--out-dir", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("nice"));
    assert!(out.join("seed_4.csv").exists());
    assert!(out.join("seed_5.csv").exists());
    assert!(!out.join("seed_1.csv").exists());
    assert!(out.join("aggregate.csv").exists());
    let header = fs::read_to_string(out.join("seed_4.csv")).unwrap();
    assert!(header.starts_with("iter,calls,grad_norm_sq,objective,refreshed"));
}

#[test]
fn invalid_config_exits_with_one_and_lists_every_issue() {
    let o = run(&["run", "--kind", "lpm", "--d", "1", "--tau", "0"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("d must be at least 2"));
    assert!(err.contains("tau must be positive"));
    assert!(err.contains("iterations or epsilon"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(run(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn divergence_exits_with_three() {
    let o = run(&[
        "run", "--kind", "lpm", "--n", "20", "--d", "5", "--s", "0.5", "--gamma", "1e6", "--p", "0.5",
        "--iterations", "200", "--seeds", "1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_passes() {
    let o = run(&["verify", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("all checks passed"));
}

#[test]
fn constants_reports_example_ratios() {
    let o = run(&["constants", "--example", "3", "--b1", "3", "--g", "3", "--m", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("stratified / uniform"));
    let o = run(&["constants", "--example", "2", "--n", "4", "--b", "4"]);
    assert!(stdout(&o).contains("importance / original uniform   5.000000000e-1"));
}

#[test]
fn sweep_writes_long_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "sweep", "--dataset", &australian(), "--clients", "10", "--seeds", "1,2", "--iterations", "50",
        "--epsilon", "0.05", "--taus", "1,3", "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 2);
    assert!(dir.path().join("uniform_tau3_pts1").join("seed_2.csv").exists());
}

#[test]
fn source_flags_must_match_the_source() {
    let o = run(&["constants", "--example", "1", "--n", "4", "--a", "1", "--b", "1", "--clients", "3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn generator_flags_default_to_a_strongly_convex_mean() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "run", "--kind", "lpm", "--n", "50", "--iterations", "5", "--seeds", "1",
        "--out-dir", dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let plan = fs::read_to_string(dir.path().join("plan.toml")).unwrap();
    let mu: f64 = plan
        .lines()
        .find_map(|l| l.strip_prefix("mu = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((mu - 1e-3).abs() < 1e-9, "mu = {mu}");
}
