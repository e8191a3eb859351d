use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use owc_cli::{cmd_pareto, cmd_power_sweep, cmd_run, parse_modes, Common, Target};
use owc_core::report::{PARETO_HEADER, POWER_SWEEP_HEADER, TRACE_HEADER};
use owc_core::Error;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn common(config: &str, out: &Path) -> Common {
    Common {
        config: scenario(config),
        out: out.to_path_buf(),
        seed: Some(3),
        command_line: "test".into(),
    }
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn run_writes_solution_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let code = cmd_run(&common("tiny.cfg", dir.path()), Target::Alpha(0.6)).unwrap();
    assert_eq!(code, 0);
    let trace = rows(&dir.path().join("trace.csv"));
    assert_eq!(trace[0], TRACE_HEADER);
    let fom: Vec<f64> = trace[1..]
        .iter()
        .map(|r| r.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(fom.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    let solution = rows(&dir.path().join("solution.csv"));
    assert_eq!(solution.iter().filter(|r| r.starts_with("power_w,")).count(), 2);
    assert_eq!(solution.iter().filter(|r| r.starts_with("allocation_led,")).count(), 4);
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed: 3\n"));
    assert!(manifest.lines().next().unwrap().starts_with("config_hash: sha256:"));
}

#[test]
fn run_rejects_alpha_out_of_range_and_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_run(&common("tiny.cfg", dir.path()), Target::Alpha(1.5));
    assert!(matches!(r, Err(Error::ConfigParse(_))));
    let r = cmd_run(&common("does_not_exist.cfg", dir.path()), Target::Alpha(0.5));
    assert!(matches!(r, Err(Error::Io(_))));
}

#[test]
fn pareto_row_counts_and_determinism() {
    let alphas: Vec<f64> = (3..=20).map(|i| i as f64 * 0.05).collect();
    let a = tempfile::tempdir().unwrap();
    assert_eq!(cmd_pareto(&common("tiny.cfg", a.path()), &alphas, &[]).unwrap(), 0);
    let body = rows(&a.path().join("pareto.csv"));
    assert_eq!(body[0], PARETO_HEADER);
    assert_eq!(body.len() - 1, 18);

    let all = parse_modes("all").unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    cmd_pareto(&common("tiny.cfg", b.path()), &alphas[..4], &all).unwrap();
    cmd_pareto(&common("tiny.cfg", c.path()), &alphas[..4], &all).unwrap();
    let (rb, rc) = (
        fs::read(b.path().join("pareto.csv")).unwrap(),
        fs::read(c.path().join("pareto.csv")).unwrap(),
    );
    assert_eq!(rb, rc);
    assert_eq!(rows(&b.path().join("pareto.csv")).len() - 1, 20);
}

#[test]
fn power_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let levels: Vec<f64> = (25..=35).map(f64::from).collect();
    cmd_power_sweep(&common("tiny.cfg", dir.path()), &levels, 0.6, &[]).unwrap();
    let body = rows(&dir.path().join("power_sweep.csv"));
    assert_eq!(body[0], POWER_SWEEP_HEADER);
    assert_eq!(body.len() - 1, 11);
}

fn owc(args: &[&str], threads: Option<&str>) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_owc"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("OWC_THREADS", t),
        None => cmd.env_remove("OWC_THREADS"),
    };
    cmd.output().unwrap().status.code().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let tiny = scenario("tiny.cfg");
    let tiny = tiny.to_str().unwrap();
    let grids = scenario("tiny_grids.toml");
    let grids = grids.to_str().unwrap();
    let full = scenario("paper_sec5.cfg");
    let full = full.to_str().unwrap();

    assert_eq!(owc(&["run", tiny, "--alpha", "0.5", "--out", out], Some("2")), 0);
    assert_eq!(owc(&["run", tiny, "--alpha", "0.5", "--out", out], Some("zero")), 1);
    assert_eq!(owc(&["run", "/nonexistent/x.cfg", "--alpha", "0.5", "--out", out], None), 1);
    assert_eq!(owc(&["run", tiny, "--epsilon", "500", "--out", out], None), 2);
    assert_eq!(owc(&["power-sweep", tiny, "--pth-dbm", "35:25:1", "--out", out], None), 1);
    assert_eq!(owc(&["oracle-check", tiny, "--grids", grids, "--out", out], None), 0);
    assert!(Path::new(out).join("oracle_check.csv").exists());
    assert_eq!(owc(&["oracle-check", full, "--grids", grids, "--out", out], None), 1);
}
