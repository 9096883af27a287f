use std::path::Path;
use std::process::Command;

use nsstab::simulation::Trajectory;
use nsstab_cli::config::{load_config, parse_config, RunConfig};
use nsstab_cli::pipeline::{export, run_pipeline, write_norms, Stage};
use nsstab_cli::report::Status;

fn config(dims: usize, physics: &str) -> String {
    format!(
        r#"
seed = 3

[mesh]
d = 2
dims = {dims}
patch_side = "left"
patch_fraction = 0.5
collar_depth = 2

[physics]
nu0 = 0.1
{physics}

[sim]
amplitudes = [1e-3]
basin = false
maxreg_samples = 2
maxreg_steps = 20
"#
    )
}

fn rest(dims: usize) -> RunConfig {
    parse_config(&config(dims, r#"equilibrium = "rest""#)).unwrap()
}

fn cellular(dims: usize) -> RunConfig {
    parse_config(&config(dims, "equilibrium = \"cellular\"\namplitude = 10.0\ncells = 2")).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn rest_flow_needs_no_control() {
    let out = run_pipeline(&rest(12), Stage::Simulate);
    assert!(out.error.is_none(), "{:?}", out.error);
    let r = &out.report;
    assert_eq!(r.spectrum.as_ref().unwrap().n_unstable, 0);
    let design = r.stages.iter().find(|s| s.stage == "design").unwrap();
    assert_eq!(design.message.as_deref(), Some("no control needed"));
    assert!(out.design.is_none());
    let fit = r.simulation.as_ref().unwrap().linear.as_ref().unwrap();
    assert!(fit.gamma_fit > 0.0);
}

#[test]
fn empty_trajectory_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("norms.csv");
    write_norms(&Trajectory::default(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn export_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = cellular(16);
    cfg.output.matrices = true;
    let out = run_pipeline(&cfg, Stage::Simulate);
    assert!(out.error.is_none(), "{:?}", out.error);
    assert!(out.design.is_some());
    export(&out, &cfg, dir.path()).unwrap();
    for f in [
        "report.json",
        "mesh_boundary.txt",
        "equilibrium.csv",
        "spectrum.csv",
        "norms_linear.csv",
        "norms_nonlinear_0.csv",
        "matrices/oseen.mtx",
        "matrices/closed_loop.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let rows = std::fs::read_to_string(dir.path().join("norms_linear.csv")).unwrap().lines().count();
    let logged = out.report.simulation.as_ref().unwrap().logged_rows;
    assert_eq!(rows, logged + 1);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["provenance"]["seed"], 3);
}

#[test]
fn reruns_are_identical() {
    let cfg = rest(12);
    let a = run_pipeline(&cfg, Stage::Simulate);
    let b = run_pipeline(&cfg, Stage::Simulate);
    assert_eq!(a.report.canonical_json(), b.report.canonical_json());
}

#[test]
fn stage_failure_skips_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "force.txt", "1.0 2.0 3.0\n");
    let path = write(
        dir.path(),
        "run.toml",
        &config(8, "equilibrium = \"newton\"\nforce_file = \"force.txt\""),
    );
    let cfg = load_config(&path).unwrap();
    let out = run_pipeline(&cfg, Stage::Verify);
    let status = |name: &str| out.report.stages.iter().find(|s| s.stage == name).map(|s| s.status);
    assert_eq!(status("mesh"), Some(Status::Ok));
    assert_eq!(status("equilibrium"), Some(Status::Failed));
    for later in ["spectrum", "design", "simulate", "verify"] {
        assert_eq!(status(later), Some(Status::Skipped), "{later}");
    }
    let msg = format!("{:#}", out.error.unwrap());
    assert!(msg.contains("equilibrium"), "{msg}");
    assert!(out.report.checks.is_empty());
    assert!(!out.report.to_json().is_empty());
}

#[test]
fn binary_reports_failing_check_with_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(16, r#"equilibrium = "rest""#) + "\n[checks]\nenabled = [\"AC02\"]\n";
    let path = write(dir.path(), "run.toml", &text);
    let out = Command::new(env!("CARGO_BIN_EXE_nsstab"))
        .args(["verify", "--check-only", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(1), "{stdout}\n{stderr}");
    assert!(stdout.contains("AC02 FAIL"), "{stdout}");
    assert!(stdout.contains("AC01 SKIP"), "{stdout}");
    assert!(stderr.contains("failing checks: AC02"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn binary_rejects_bad_config_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.toml", &config(8, r#"equilibrium = "rest""#).replace("nu0 = 0.1", "nu0 = -1.0"));
    let out = Command::new(env!("CARGO_BIN_EXE_nsstab")).args(["mesh", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nu0"));
}

#[test]
fn binary_mesh_stage_writes_boundary_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "run.toml", &config(8, r#"equilibrium = "rest""#));
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_nsstab"))
        .args(["mesh", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dump = std::fs::read_to_string(out_dir.join("mesh_boundary.txt")).unwrap();
    assert_eq!(dump.lines().count(), 32);
    assert!(out_dir.join("report.json").is_file());
}

#[test]
fn slow_design_rate_is_flagged() {
    let text = config(16, "equilibrium = \"cellular\"\namplitude = 10.0\ncells = 2") + "\n[design]\ngamma1 = 0.5\n";
    let out = run_pipeline(&parse_config(&text).unwrap(), Stage::Design);
    assert!(out.error.is_none(), "{:?}", out.error);
    let design = out.report.stages.iter().find(|s| s.stage == "design").unwrap();
    assert_eq!(design.status, Status::Ok);
    assert!(design.message.as_deref().unwrap_or("").contains("does not exceed gamma0"), "{:?}", design.message);
}
