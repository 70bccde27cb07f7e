use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rfb_core::mesh::read_solution;

fn rfb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rfb")).args(args).output().expect("run rfb")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn strip_time(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(a, _)| a).to_string()).collect()
}

#[test]
fn missing_config_is_a_config_error() {
    let out = rfb(&["solve", "--config", "does-not-exist.cfg"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "mesh.n = 4\nsolver.kind = cg\n");
    let out = rfb(&["study", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("solver.kind"));
}

#[test]
fn solve_writes_dump_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "problem.eps = 0.25\nmesh.n = 4\nmesh.m = 4\nscheme = rfb_decoupled\n");
    let out_dir = dir.path().join("out");
    let out = rfb(&["solve", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (mesh, values) = read_solution(std::io::BufReader::new(fs::File::open(out_dir.join("solution.txt")).unwrap())).unwrap();
    assert_eq!(mesh.num_nodes(), 17 * 17);
    assert_eq!(values.len(), mesh.num_nodes());
    assert!(values.iter().any(|&v| v > 0.0));
    let report = fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("scheme = rfb_decoupled"));
    assert!(report.contains("converged = true"));
}

#[test]
fn non_convergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.cfg", "mesh.n = 4\nscheme = galerkin\npicard.max_iter = 1\n");
    let out = rfb(&["solve", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn study_rows_and_config_echo_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "study.cfg",
        "problem.alpha.rho = 0.3\nproblem.eps = 0.5, 0.25\nmesh.n = 2, 4\nmesh.m = 4\nmesh.ref_levels = 3\n\
         scheme = galerkin, rfb_coupled, rfb_reduced\npicard.tol = 1e-9\n",
    );
    let first = dir.path().join("first");
    let out = rfb(&["study", "--config", &cfg, "--out", first.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(first.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);

    let echo = first.join("config.cfg");
    let second = dir.path().join("second");
    let out = rfb(&["study", "--config", echo.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let again = fs::read_to_string(second.join("study.csv")).unwrap();
    assert_eq!(strip_time(&csv), strip_time(&again));
    assert_eq!(fs::read_to_string(&echo).unwrap(), fs::read_to_string(second.join("config.cfg")).unwrap());
}

#[test]
fn verify_exit_code_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = rfb(&["verify", "--out", dir.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count(), 9);
    let all_pass = !stdout.contains("[FAIL]");
    assert_eq!(out.status.code(), Some(if all_pass { 0 } else { 1 }));
    assert_eq!(fs::read_to_string(dir.path().join("acceptance.txt")).unwrap(), stdout);
}
