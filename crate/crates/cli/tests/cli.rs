//! End-to-end checks of the ermlab binary: exit codes, artifact layout,
//! fail-fast validation, and byte determinism across thread counts.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn ermlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ermlab"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.config");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn negative_trials_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = h-estimate\nexperiment.trials = -5\n",
    );
    let out = dir.path().join("results.csv");
    let output = ermlab().arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists());
    assert!(!dir.path().join("results.summary.txt").exists());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("experiment.trials"), "{stderr}");
}

#[test]
fn missing_config_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let output = ermlab()
        .arg("--config")
        .arg(dir.path().join("absent.config"))
        .arg("--out")
        .arg(dir.path().join("results.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_output_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = h-estimate\nexperiment.trials = 100\n",
    );
    let output = ermlab().arg("--config").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("--out"), "{stderr}");
}

#[test]
fn successful_run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = h-estimate\n\
         experiment.trials = 1000\nseed = 7\n",
    );
    let out = dir.path().join("results.csv");
    let output = ermlab().arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));

    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("problem_id,"));
    assert!(lines[1].contains(",7,"));

    let summary = fs::read_to_string(dir.path().join("results.summary.txt")).unwrap();
    assert!(summary.contains("experiment = h-estimate"));
    assert!(summary.contains("seed = 7"));
    assert!(summary.contains("PASS"));

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("wrote"), "{stdout}");
}

#[test]
fn output_key_in_config_is_honored_without_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_config.csv");
    let config = write_config(
        dir.path(),
        &format!(
            "problem.family = two_point\nexperiment.name = h-estimate\n\
             experiment.trials = 100\noutput = {}\n",
            out.display()
        ),
    );
    let output = ermlab().arg("--config").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(out.exists());
}

#[test]
fn assertion_failure_exits_1_but_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = theorem3\n\
         experiment.n_list = 64\nexperiment.trials = 200\n\
         experiment.p_floor = 1.0\nseed = 2\n",
    );
    let out = dir.path().join("results.csv");
    let output = ermlab().arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(out.exists());
    let summary = fs::read_to_string(dir.path().join("results.summary.txt")).unwrap();
    assert!(summary.contains("FAIL"));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("assertion failed"), "{stderr}");
}

#[test]
fn seed_flag_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = h-estimate\n\
         experiment.trials = 1000\nseed = 7\n",
    );
    let run = |name: &str, seed: &str| -> String {
        let out = dir.path().join(name);
        let output = ermlab()
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg(seed)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0));
        fs::read_to_string(&out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "2");
    let c = run("c.csv", "1");
    assert_ne!(a, b);
    assert_eq!(a, c);
}

#[test]
fn thread_count_never_changes_output_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = two_point\nexperiment.name = sweep\n\
         experiment.n_list = 16,64\nexperiment.trials = 300\n\
         experiment.delta_grid = 1.0,0.9\nseed = 13\n",
    );
    let run = |name: &str, threads: &str| -> (String, String) {
        let out = dir.path().join(name);
        let output = ermlab()
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--threads")
            .arg(threads)
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
        let summary = out.with_extension("summary.txt");
        (fs::read_to_string(&out).unwrap(), fs::read_to_string(summary).unwrap())
    };
    let (csv_1, summary_1) = run("one.csv", "1");
    let (csv_8, summary_8) = run("eight.csv", "8");
    assert_eq!(csv_1, csv_8);
    assert_eq!(summary_1, summary_8);
}

#[test]
fn file_problems_run_under_a_file_id() {
    let dir = tempfile::tempdir().unwrap();
    let problem = "\
atoms = 2
weights = 0.5, 0.5
target = 0, 0
f.0 = 1, 0
f.1 = 0, 1
oracle_index = 0
";
    let problem_path = dir.path().join("mirror.problem");
    fs::write(&problem_path, problem).unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            "problem.family = file\nproblem.file = {}\n\
             experiment.name = theorem2\n",
            problem_path.display()
        ),
    );
    let out = dir.path().join("results.csv");
    let output = ermlab().arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.contains("file:mirror"));
}

#[test]
fn unreadable_problem_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "problem.family = file\nproblem.file = /nonexistent/missing.problem\n\
         experiment.name = h-estimate\n",
    );
    let out = dir.path().join("results.csv");
    let output = ermlab().arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists());
}
