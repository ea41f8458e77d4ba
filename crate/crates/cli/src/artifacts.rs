//! Run directories and deterministic artifact files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pelab_core::dynamics::{StepDiagnostics, Trajectory};
use pelab_core::field::Representation;
use pelab_core::{snapshot, Grid};
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Creates `<root>/<experiment>-<timestamp>`, adding a counter when the name
/// is taken. Existing directories are never reused.
pub fn fresh_run_dir(root: &Path, experiment: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let base = format!("{experiment}-{stamp}");
    for k in 0..10_000 {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(CliError::Io(format!("could not create a fresh run directory under {}", root.display())))
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    write_text(dir, name, &s)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

/// Everything needed to replay the run: `pelab run manifest.json`.
pub fn write_manifest(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let m = Manifest { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), experiment: cfg.experiment.name(), seed: cfg.run.seed, config: cfg };
    write_json(dir, "manifest.json", &m)
}

pub fn diagnostics_csv(diags: &[StepDiagnostics]) -> String {
    let full = diags.first().is_some_and(|d| d.stopping.is_some());
    let mut s = String::from("step,time,energy,v_norm2,a_norm2,constraint");
    if let Some(st) = diags.first().and_then(|d| d.stopping) {
        for (name, _) in st.named() {
            s.push(',');
            s.push_str(name);
        }
    }
    s.push('\n');
    for d in diags {
        s.push_str(&format!("{},{:e},{:e},{:e},{:e},{:e}", d.step, d.time, d.energy, d.v_norm2, d.a_norm2, d.constraint));
        if full {
            if let Some(st) = d.stopping {
                for (_, v) in st.named() {
                    s.push_str(&format!(",{v:e}"));
                }
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    step: usize,
    time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostics: Option<&'a StepDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    state: Option<&'a pelab_core::State>,
}

/// One JSON object per stored step.
pub fn write_trajectory_ndjson(dir: &Path, name: &str, traj: &Trajectory, with_states: bool) -> Result<(), CliError> {
    let mut out = std::io::BufWriter::new(fs::File::create(dir.join(name))?);
    for (i, (&step, &time)) in traj.steps.iter().zip(&traj.times).enumerate() {
        let line = TrajectoryLine {
            step,
            time,
            diagnostics: traj.diagnostics.binary_search_by_key(&step, |d| d.step).ok().map(|k| &traj.diagnostics[k]),
            state: with_states.then(|| &traj.states[i]),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| CliError::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Diagnostics table, NDJSON trajectory and final-state snapshot.
pub fn write_trajectory(dir: &Path, prefix: &str, grid: &Grid, traj: &Trajectory, with_states: bool) -> Result<(), CliError> {
    write_text(dir, &format!("{prefix}diagnostics.csv"), &diagnostics_csv(&traj.diagnostics))?;
    write_trajectory_ndjson(dir, &format!("{prefix}trajectory.ndjson"), traj, with_states)?;
    snapshot::save(&dir.join(format!("{prefix}final.snap")), grid, traj.final_state(), Representation::Physical)?;
    Ok(())
}
