use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
schema_version = 1
[run]
seed = 9
[grid]
nx = 4
ny = 4
nz = 3
[integrator]
dt = 0.05
t_end = 0.2
eps = 0.01
[experiment]
kind = "deterministic"
"#;

fn pelab(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pelab"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("HD_RUN_SEED")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_dir(o: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find_map(|l| l.strip_prefix("artifacts: ")).expect("artifact line");
    PathBuf::from(line)
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn deterministic_run_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let o = pelab(&cfg, &tmp.path().join("runs"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run_dir(&o);
    for f in ["manifest.json", "diagnostics.csv", "trajectory.ndjson", "final.snap"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let csv = String::from_utf8(bytes(&dir, "diagnostics.csv")).unwrap();
    assert!(csv.starts_with("step,time,energy"));
}

#[test]
fn missing_grid_exits_2_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("[grid]\nnx = 4\nny = 4\nnz = 3\n", "");
    let cfg = write_config(tmp.path(), "nogrid.toml", &text);
    let o = pelab(&cfg, &tmp.path().join("runs"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`grid`"));
    assert!(!tmp.path().join("runs").exists());
}

#[test]
fn missing_schema_version_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "nover.toml", &TINY.replace("schema_version = 1", ""));
    let o = pelab(&cfg, &tmp.path().join("runs"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema_version"));
}

#[test]
fn missing_snapshot_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{TINY}\n[initial]\nkind = \"snapshot\"\npath = \"absent.snap\"\n");
    let cfg = write_config(tmp.path(), "snap.toml", &text);
    let o = pelab(&cfg, &tmp.path().join("runs"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("initial.path"));
}

#[test]
fn blow_up_exits_3_with_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("eps = 0.01", "eps = 0.01\nblowup_threshold = 1e-6");
    let cfg = write_config(tmp.path(), "blow.toml", &text);
    let o = pelab(&cfg, &tmp.path().join("runs"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let run = fs::read_dir(tmp.path().join("runs")).unwrap().next().unwrap().unwrap().path();
    let err: serde_json::Value = serde_json::from_slice(&bytes(&run, "error.json")).unwrap();
    assert_eq!(err["exit_code"], 3);
}

#[test]
fn repeated_runs_are_byte_identical_and_never_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("kind = \"deterministic\"", "kind = \"mc-scaling\"\npaths = 2000\neps = [0.2, 0.1]");
    let cfg = write_config(tmp.path(), "mc.toml", &text);
    let out = tmp.path().join("runs");
    let a = run_dir(&pelab(&cfg, &out, &[]));
    let b = run_dir(&pelab(&cfg, &out, &[]));
    assert_ne!(a, b);
    for f in ["scaling.csv", "scaling.json"] {
        assert_eq!(bytes(&a, f), bytes(&b, f), "{f} differs");
    }
    let c = run_dir(&pelab(&cfg, &out, &["--seed", "10"]));
    assert_ne!(bytes(&a, "scaling.csv"), bytes(&c, "scaling.csv"));
}

#[test]
fn manifest_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("kind = \"deterministic\"", "kind = \"stochastic\"\npaths = 3");
    let cfg = write_config(tmp.path(), "st.toml", &text);
    let a = run_dir(&pelab(&cfg, &tmp.path().join("first"), &[]));
    let o = pelab(&a.join("manifest.json"), &tmp.path().join("replay"), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let b = run_dir(&o);
    for f in ["ensemble.csv", "summary.json", "path0_diagnostics.csv", "path0_trajectory.ndjson", "path0_final.snap"] {
        assert_eq!(bytes(&a, f), bytes(&b, f), "{f} differs");
    }
}

#[test]
fn overrides_reach_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "tiny.toml", TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_pelab"))
        .args(["run", cfg.to_str().unwrap(), "--experiment", "rate-mdp", "--out"])
        .arg(tmp.path().join("runs"))
        .output()
        .unwrap();
    // rate-mdp needs a target, so the replaced experiment table is incomplete
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("target"));

    let o = Command::new(env!("CARGO_BIN_EXE_pelab"))
        .args(["run", cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path().join("runs"))
        .env("HD_RUN_SEED", "42")
        .env("HD_INTEGRATOR_T_END", "0.1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&bytes(&run_dir(&o), "manifest.json")).unwrap();
    assert_eq!(m["seed"], 42);
    assert_eq!(m["config"]["integrator"]["t_end"], 0.1);
}
