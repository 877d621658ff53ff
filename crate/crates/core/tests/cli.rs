use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bksihr"));
    c.env_remove("BKSIHR_OUT_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn table1() -> String {
    configs().join("table1.toml").display().to_string()
}

/// Same as the benchmark config with small grids for quick runs.
fn small_config(dir: &Path) -> PathBuf {
    let text = std::fs::read_to_string(configs().join("table1.toml"))
        .unwrap()
        .replace("t_end = 250", "t_end = 40")
        .replace("replicates = 15", "replicates = 2\nt_end = 40\ntrue_days = [7.0, 35.0]\nfilter_days = [7.0, 35.0, 98.0]");
    let p = dir.join("small.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn missing_config_is_a_validation_error() {
    let o = run(&["fit", "--config", "/definitely/not/here.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cannot read config"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let o = run(&["fit", "--config", &table1(), "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(run(&["fit"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["experiment", "misspec", "--help"]).status.code(), Some(0));
}

#[test]
fn invalid_override_is_a_validation_error() {
    let o = run(&["fit", "--config", &table1(), "--np", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sampler.particles"), "{}", stderr(&o));
    let o = run(&["fit", "--config", &table1(), "--iters", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sampler.iterations"), "{}", stderr(&o));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = run(&["simulate", "--config", &table1(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn fit_smoke_on_bundled_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fit");
    let az = configs().join("arizona.toml");
    let o = run(&[
        "fit",
        "--config",
        az.to_str().unwrap(),
        "--iters",
        "200",
        "--np",
        "100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["chain.csv", "summary.json", "bands.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let chain = std::fs::read_to_string(out.join("chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 201);
    assert!(chain.starts_with("iteration,eta,lambda,mu,sigma,log_post,log_likelihood,accepted\n"));
    let bands = std::fs::read_to_string(out.join("bands.csv")).unwrap();
    assert_eq!(bands.lines().count(), 1 + 136 * 5);

    let s = run(&["summarize", "--config", az.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(s.status.code(), Some(0), "{}", stderr(&s));
    let summary: serde_json::Value = serde_json::from_slice(&s.stdout).unwrap();
    assert_eq!(summary["iterations"], 200);
}

#[test]
fn filter_manifests_repeat_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut hashes = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("f{k}"));
        let o = run(&["filter", "--config", cfg.to_str().unwrap(), "--np", "200", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"], 20240601);
        hashes.push(m["files"].clone());
    }
    assert_eq!(hashes[0], hashes[1]);
    let out = dir.path().join("f2");
    run(&["filter", "--config", cfg.to_str().unwrap(), "--np", "200", "--seed", "1", "--out", out.to_str().unwrap()]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_ne!(m["files"], hashes[0]);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("from_env");
    let o = bin()
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("BKSIHR_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("observations.csv").is_file());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn experiments_write_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("dec");
    let o = run(&["experiment", "decorrelation", "--config", cfg.to_str().unwrap(), "--np", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let grid = std::fs::read_to_string(out.join("rmse_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 3 * 2);

    let out = dir.path().join("mis");
    let o = run(&["experiment", "misspec", "--config", cfg.to_str().unwrap(), "--np", "50", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let grid = std::fs::read_to_string(out.join("rmse_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 2 * 3 * 2);
    let ranks = std::fs::read_to_string(out.join("ranks.csv")).unwrap();
    assert_eq!(ranks.lines().count(), 1 + 3);
}
