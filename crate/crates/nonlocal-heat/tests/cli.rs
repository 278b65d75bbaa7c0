//! Smoke tests for the command-line interface: each verb end to end, plus
//! the exit-code contract (1 = failed checks, 2 = bad config or arguments,
//! 3 = runtime failure).

use std::path::Path;
use std::process::{Command, Output};

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-heat"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn small_config(dir: &Path) -> String {
    format!(
        "dimension = 1\n\
         points_per_axis = 128\n\
         half_width = 20\n\
         t_end = 5\n\
         sample_count = 12\n\
         q_list = 2, 3\n\
         output.csv = {}\n\
         output.summary = {}\n\
         output.sweep = {}\n",
        dir.join("decay.csv").display(),
        dir.join("summary.json").display(),
        dir.join("sweep.csv").display(),
    )
}

#[test]
fn run_fit_and_sweep_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("small.conf");
    std::fs::write(&config_path, small_config(dir.path())).unwrap();
    let config = config_path.to_str().unwrap();

    let run = run_cli(&["run", config]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    let text = stdout(&run);
    assert!(text.contains("q = 2: slope"), "stdout: {text}");
    assert!(text.contains("wrote"), "stdout: {text}");
    assert!(dir.path().join("decay.csv").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    let run_slope = summary["fits"][1]["slope"].as_f64().unwrap();

    let fit = run_cli(&[
        "fit",
        dir.path().join("decay.csv").to_str().unwrap(),
        "--q",
        "3",
    ]);
    assert_eq!(fit.status.code(), Some(0), "stderr: {}", stderr(&fit));
    let refit: serde_json::Value = serde_json::from_str(&stdout(&fit)).unwrap();
    let fit_slope = refit["slope"].as_f64().unwrap();
    assert!(
        (fit_slope - run_slope).abs() <= 1e-12,
        "refit slope {fit_slope} vs run slope {run_slope}"
    );

    let sweep = run_cli(&["sweep", config, "--axis", "q", "--values", "2,3"]);
    assert_eq!(sweep.status.code(), Some(0), "stderr: {}", stderr(&sweep));
    assert!(
        stdout(&sweep).contains("wrote"),
        "stdout: {}",
        stdout(&sweep)
    );
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("value,slope,theoretical_exponent,"));
}

#[test]
fn verify_decay_suite_passes() {
    let verify = run_cli(&["verify", "decay"]);
    assert_eq!(verify.status.code(), Some(0), "stderr: {}", stderr(&verify));
    let text = stdout(&verify);
    assert!(text.contains("PASS decay/power_law_fit"), "stdout: {text}");
    assert!(text.contains("checks passed"), "stdout: {text}");
}

#[test]
fn bad_inputs_use_the_config_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "sigma = 1.5\n").unwrap();
    let run = run_cli(&["run", bad.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("sigma must lie in (0, 1)"));

    let missing = run_cli(&["run", dir.path().join("absent.conf").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));

    let selector = run_cli(&["verify", "nonsense"]);
    assert_eq!(selector.status.code(), Some(2));

    std::fs::write(dir.path().join("ok.conf"), "dimension = 1\n").unwrap();
    let axis = run_cli(&[
        "sweep",
        dir.path().join("ok.conf").to_str().unwrap(),
        "--axis",
        "nonsense",
        "--values",
        "1",
    ]);
    assert_eq!(axis.status.code(), Some(2));
}

#[test]
fn runtime_failures_use_the_runtime_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let fit = run_cli(&[
        "fit",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--q",
        "2",
    ]);
    assert_eq!(fit.status.code(), Some(3));

    std::fs::write(dir.path().join("thin.csv"), "t,mass,l1,linf,lq_2\n").unwrap();
    let thin = run_cli(&[
        "fit",
        dir.path().join("thin.csv").to_str().unwrap(),
        "--q",
        "7",
    ]);
    assert_eq!(thin.status.code(), Some(3));
    assert!(stderr(&thin).contains("lq_7"), "stderr: {}", stderr(&thin));
}
