use std::path::Path;
use std::process::{Command, Output};

use shearlab_cli::artifacts::Manifest;

fn shearlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shearlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn fixtures(dir: &Path) {
    write(
        dir,
        "s.json",
        r#"{"breakpoints":[0,0.5,1],"values":[1,-1]}"#,
    );
    write(
        dir,
        "t.json",
        r#"{"breakpoints":[0,0.5,1],"values":[-1,1]}"#,
    );
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn plan_on_the_swap_fixture_is_one_transpose() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let out = shearlab(
        dir.path(),
        &[
            "plan",
            "--source",
            "s.json",
            "--target",
            "t.json",
            "--eps",
            "1e-3",
            "--seed",
            "42",
            "--out",
            "plan.json",
            "--out-dir",
            "run",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let plan: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run/plan.json")).unwrap()).unwrap();
    assert_eq!(
        plan["moves"],
        serde_json::json!([{"op": "transpose", "k": 1}])
    );
    assert_eq!(plan["converged"], serde_json::json!(true));
    let m = manifest(&dir.path().join("run"));
    assert_eq!(m.seed, 42);
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(m.artifacts[0].path, "plan.json");
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    write(
        dir.path(),
        "cfg.json",
        r#"{"schema_version":1,"plan":{"eps":0.1,"tolerance":3}}"#,
    );
    let out = shearlab(
        dir.path(),
        &[
            "plan",
            "--config",
            "cfg.json",
            "--source",
            "s.json",
            "--target",
            "t.json",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("run").exists());
    let out = shearlab(dir.path(), &["plan", "--eps", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let out = shearlab(
        dir.path(),
        &[
            "plan",
            "--source",
            "gone.json",
            "--target",
            "t.json",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn numerical_failure_exits_3_and_flushes_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = shearlab(
        dir.path(),
        &[
            "simulate",
            "--n1",
            "16",
            "--n2",
            "32",
            "--mollify-width",
            "0.2",
            "--T",
            "1",
            "--dt",
            "1",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("t,energy,momentum"), "{err}");
    assert!(!dir.path().join("run").exists());
}

#[test]
fn config_file_drives_a_run_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    write(
        dir.path(),
        "cfg.json",
        r#"{"schema_version":1,"seed":9,"plan":{"source":"s.json","target":"t.json","eps":0.5,"out":"p.json"}}"#,
    );
    let out = shearlab(
        dir.path(),
        &[
            "plan",
            "--config",
            "cfg.json",
            "--eps",
            "0.01",
            "--out-dir",
            "run",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = manifest(&dir.path().join("run"));
    assert_eq!(m.seed, 9);
    assert_eq!(m.config["eps"], serde_json::json!(0.01));
    assert!(dir.path().join("run/p.json").exists());
}

#[test]
fn braid_of_a_crossing_and_report_of_a_run() {
    let dir = tempfile::tempdir().unwrap();
    // Particle 0 passes below particle 1.
    write(
        dir.path(),
        "ens.csv",
        "particle,slice,x1,x2\n0,0,0.2,0.3\n0,1,0.6,0.3\n0,2,1.0,0.3\n1,0,0.6,0.7\n1,1,0.6,0.7\n1,2,0.6,0.7\n",
    );
    let out = shearlab(
        dir.path(),
        &[
            "braid",
            "--in",
            "ens.csv",
            "--ref",
            "ens.csv",
            "--out-dir",
            "b",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let b: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("b/braid.json")).unwrap()).unwrap();
    assert_eq!(b["word"], serde_json::json!([1]));
    assert_eq!(b["permutation"], serde_json::json!([1, 0]));
    assert_eq!(b["verdict"], serde_json::json!("indistinguishable"));

    let out = shearlab(
        dir.path(),
        &["control", "--mode", "ramp", "--T", "2", "--out-dir", "c"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = shearlab(dir.path(), &["report", "--runs", "c", "--out-dir", "r"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.path().join("r/ladder.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "T,cost,endpoint_error,relative_error,baseline_cost"
    );
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2.0,"));
}
