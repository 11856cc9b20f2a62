//! End-to-end checks of the command-line driver through the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn dwere(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dwere"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn example_simulation_prints_the_known_trajectory() {
    let dir = tempdir("example");
    let out = dwere(&["simulate", "--example"], &dir);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.contains("trajectory: 0,-3,0,2,0,2,3,0,2,3,5"),
        "unexpected output: {text}"
    );
}

#[test]
fn k_returns_simulation_reports_the_exact_count() {
    let dir = tempdir("kreturns");
    let out = dwere(&["simulate", "--construct", "k-returns", "--k", "7"], &dir);
    assert!(out.status.success());
    assert!(stdout(&out).contains("D_0 = 7"), "{}", stdout(&out));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempdir("determinism");
    let args = [
        "simulate", "--seed", "1", "--L", "2", "--M", "2", "--max-steps", "100000", "--out",
    ];
    let a = dwere(&[&args[..], &["a"]].concat(), &dir);
    let b = dwere(&[&args[..], &["b"]].concat(), &dir);
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    for name in ["trajectory.txt", "outcome.json", "environment.env"] {
        let x = std::fs::read(dir.join("a").join(name)).unwrap();
        let y = std::fs::read(dir.join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempdir("usage");
    let out = dwere(&["estimate", "rate", "--n", "8"], &dir);
    assert_eq!(out.status.code(), Some(1), "missing --lambda is a usage error");
    let out = dwere(&["simulate", "--construct", "nonsense"], &dir);
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(dir.join("bad.toml"), "[common]\nnot_a_key = 3\n").unwrap();
    let out = dwere(&["--config", "bad.toml", "simulate", "--example"], &dir);
    assert_eq!(out.status.code(), Some(1), "unknown config keys are rejected");
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempdir("runtime");
    let out = dwere(
        &["surgery", "--raise", "0,1,5,9", "--env", "missing.env"],
        &dir,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inconclusive_verification_exits_three() {
    // Far-too-rare events at a tiny trial count: zero successes everywhere,
    // so the composition check cannot conclude.
    let dir = tempdir("inconclusive");
    let out = dwere(
        &[
            "estimate", "subadd", "--lambda", "1.9", "--pair", "64,64", "--trials", "500",
            "--L", "2", "--M", "3", "--seed", "4",
        ],
        &dir,
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "stdout: {} stderr: {}",
        stdout(&out),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempdir("workers");
    let base = [
        "estimate", "returns", "--L", "2", "--M", "2", "--trials", "20000", "--kmax", "3",
        "--seed", "9",
    ];
    let one = dwere(&[&base[..], &["--workers", "1"]].concat(), &dir);
    let four = dwere(&[&base[..], &["--workers", "4"]].concat(), &dir);
    assert!(one.status.success() && four.status.success());
    assert_eq!(stdout(&one), stdout(&four));
}

#[test]
fn scientific_notation_trial_counts() {
    let dir = tempdir("scinot");
    let out = dwere(
        &[
            "estimate", "returns", "--trials", "1e4", "--kmax", "2", "--L", "2", "--M", "2",
        ],
        &dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn construct_writes_a_patch_file() {
    let dir = tempdir("construct");
    let out = dwere(
        &[
            "construct", "--kind", "ballistic", "--chain", "3", "--L", "2", "--M", "2", "--out",
            "c",
        ],
        &dir,
    );
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.join("c").join("ballistic.env")).unwrap();
    assert!(text.lines().next().unwrap().starts_with("DWERE L=2 M=2"));
    assert!(text.contains("# ballistic n=3 L=2"));
    // Four patched sites, one per chain link.
    assert_eq!(text.lines().count(), 2 + 4);
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("dwere-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
