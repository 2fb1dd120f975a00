//! End-to-end tests of the `pws` binary: artifact layout, determinism, and
//! exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn pws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pws"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn params_are_deterministic_and_canonical() {
    let dir = tempdir("params");
    let out = pws(&[
        "params",
        "--bits",
        "32",
        "--n",
        "4",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let first = read(&dir, "params.txt");
    for field in ["p=", ";q=", ";g=", ";qt=", ";n=4"] {
        assert!(first.contains(field), "missing {field} in {first}");
    }
    assert!(!first.contains(' '));

    let out = pws(&[
        "params",
        "--bits",
        "32",
        "--n",
        "4",
        "--seed",
        "1",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read(&dir, "params.txt"), first);
}

#[test]
fn params_rejects_oversized_padding_with_exit_2() {
    let out = pws(&["params", "--bits", "8", "--n", "100"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("padding"), "stderr: {stderr}");
}

#[test]
fn run_writes_all_artifacts_and_is_deterministic() {
    let dir_a = tempdir("run-a");
    let dir_b = tempdir("run-b");
    for dir in [&dir_a, &dir_b] {
        let out = pws(&[
            "run",
            "--n",
            "4",
            "--N",
            "2",
            "--bits",
            "64",
            "--seed",
            "7",
            "--queries",
            "alpha,beta,gamma,delta",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in [
        "params.txt",
        "metrics.csv",
        "events.log",
        "summary.json",
        "results.csv",
    ] {
        assert_eq!(
            read(&dir_a, name),
            read(&dir_b, name),
            "{name} differs across reruns"
        );
    }
    let results = read(&dir_a, "results.csv");
    assert_eq!(results.lines().count(), 5);
    assert!(results.contains("u1,alpha,R:"));
    let metrics = read(&dir_a, "metrics.csv");
    assert!(metrics.starts_with("party,exp,mul,bits_sent,rounds_seen\n"));
    assert!(!dir_a.join("abort.txt").exists());
}

#[test]
fn wrong_query_count_is_a_config_error() {
    let dir = tempdir("badqueries");
    let out = pws(&[
        "run",
        "--n",
        "4",
        "--bits",
        "64",
        "--queries",
        "only,three,terms",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn injected_shuffle_fault_exits_3_and_names_the_user() {
    let dir = tempdir("fault");
    let out = pws(&[
        "run",
        "--n",
        "4",
        "--mode",
        "malicious",
        "--bits",
        "64",
        "--k",
        "8",
        "--seed",
        "3",
        "--fault",
        "shuffle:3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let abort = read(&dir, "abort.txt");
    assert_eq!(abort.trim(), "ABORT,3,u3,bad-shuffle-proof");
    assert!(read(&dir, "summary.json").contains("\"culprit\": \"u3\""));
}

#[test]
fn config_file_is_merged_with_flags_winning() {
    let dir = tempdir("config");
    let config_path = dir.join("run.json");
    std::fs::write(
        &config_path,
        r#"{"n": 3, "N": 1, "bits": 64, "seed": 11, "queries": ["x", "y", "z"]}"#,
    )
    .unwrap();
    // Flag overrides the file's seed; everything else comes from the file.
    let out = pws(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = read(&dir, "summary.json");
    assert!(summary.contains("\"n\": 3"));
    assert!(summary.contains("\"managers\": 1"));
}

#[test]
fn sweep_writes_per_seed_directories() {
    let dir = tempdir("sweep");
    let out = pws(&[
        "sweep",
        "--n",
        "3",
        "--N",
        "1",
        "--bits",
        "64",
        "--seeds",
        "3",
        "--seed-start",
        "5",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for seed in 5..8 {
        assert!(dir
            .join(format!("seed-{seed}"))
            .join("summary.json")
            .exists());
    }
}

#[test]
fn lemma_prints_exact_bound_and_monte_carlo() {
    let out = pws(&[
        "lemma", "--nu", "4", "--t", "2", "--n", "2", "--mc", "20000",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("exact: 3.333333e-1"));
    assert!(stdout.contains("bound: 5.000000e-1"));
    assert!(stdout.contains("monte-carlo"));

    let out = pws(&["lemma", "--nu", "100", "--t", "0", "--n", "4"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("exact: 0"));
    assert!(stdout.contains("bound: undefined"));
}

#[test]
fn group_setup_writes_board_and_assignments() {
    let dir = tempdir("group");
    let out = pws(&[
        "group",
        "--nu",
        "20",
        "--n",
        "10",
        "--seed",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let board = read(&dir, "board.txt");
    assert_eq!(board.lines().count(), 20);
    let assignments = read(&dir, "assignments.csv");
    assert_eq!(assignments.lines().count(), 21);
    assert!(assignments.starts_with("id,group\n"));

    // Same seed, same files.
    let rerun = tempdir("group-rerun");
    let out = pws(&[
        "group",
        "--nu",
        "20",
        "--n",
        "10",
        "--seed",
        "2",
        "--out",
        rerun.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(read(&rerun, "board.txt"), board);
    assert_eq!(read(&rerun, "assignments.csv"), assignments);
}

fn tempdir(label: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("pws-cli-test-{label}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
