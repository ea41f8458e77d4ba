//! Experiment execution.

use std::path::{Path, PathBuf};

use pelab_core::deviations::{self, ObsValue, Observation, RateProblem, RateReport, ScalarOu, ScalingTable};
use pelab_core::dynamics::{self, IntegratorConfig, Trajectory};
use pelab_core::field::Representation;
use pelab_core::noise::{self, ControlPath, NoiseFamily, NoiseModel, WienerStream};
use pelab_core::operators::{ForcingTerm, TimeFn};
use pelab_core::verify::{self, FieldBand, RatioStudy};
use pelab_core::{exec, snapshot, stats, Execution, Forcing, Grid, Model, State};
use serde::Serialize;

use crate::artifacts::{self, write_json, write_text};
use crate::config::{self, ControlSpec, Experiment, InitialBlock, McSpec, NoiseBlock, RateSpec, RunConfig, TargetSpec, TimeSpec, VerifySpec};
use crate::CliError;

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// Short human-readable lines for the terminal.
    pub summary: Vec<String>,
}

/// Everything derived from the config that the experiments share.
pub struct Setup {
    pub model: Model,
    pub noise: NoiseModel,
    pub forcing: Forcing,
    pub u0: State,
    pub cfg: IntegratorConfig,
    pub seed: u64,
}

pub fn build_model(cfg: &RunConfig) -> Result<Model, CliError> {
    let grid = Grid::new(cfg.grid.domain()).map_err(|e| CliError::Invalid(e.to_string()))?;
    let model = Model::new(grid, cfg.physics.params())?;
    Ok(if cfg.physics.advection { model } else { model.without_advection() })
}

pub fn build_noise(model: &Model, block: &NoiseBlock) -> Result<NoiseModel, CliError> {
    Ok(match block {
        NoiseBlock::ShippedDefault { declared } => {
            let d = NoiseModel::shipped_default(model);
            NoiseModel::new(model, d.family().clone(), *declared)?
        }
        NoiseBlock::Shipped { modes, declared } => NoiseModel::new(model, NoiseFamily::Shipped { modes: modes.clone() }, *declared)?,
        NoiseBlock::ScalarMultiple { c, declared } => NoiseModel::new(model, NoiseFamily::ScalarMultiple { c: *c }, *declared)?,
        NoiseBlock::None => NoiseModel::zero(model),
    })
}

fn time_fn(t: TimeSpec) -> TimeFn {
    match t {
        TimeSpec::Const => TimeFn::Const,
        TimeSpec::Exp { rate } => TimeFn::Exp { rate },
        TimeSpec::Sin { omega, phase } => TimeFn::Sin { omega, phase },
    }
}

pub fn build_setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let model = build_model(cfg)?;
    let g = &model.grid;
    let noise = build_noise(&model, &cfg.noise)?;
    let forcing = Forcing {
        terms: cfg
            .forcing
            .terms
            .iter()
            .map(|t| ForcingTerm { profile: config::modes_state(g, &t.modes), time: time_fn(t.time) })
            .collect(),
    };
    let seed = cfg.run.seed;
    let raw = match &cfg.initial {
        InitialBlock::Zero => State::zeros(g),
        InitialBlock::Random { seed: s, k_max, n_max, decay, amplitude } => {
            let band = FieldBand { k_max: *k_max, n_max: *n_max, decay: *decay };
            verify::random_state(g, s.unwrap_or(seed), 0, band).scaled(*amplitude)
        }
        InitialBlock::Modes { modes } => config::modes_state(g, modes),
        InitialBlock::Snapshot { path } => load_state(g, path)?,
    };
    let u0 = model.project(&raw);
    Ok(Setup { model, noise, forcing, u0, cfg: cfg.integrator.config(), seed })
}

fn load_state(g: &Grid, path: &str) -> Result<State, CliError> {
    let (h, s) = snapshot::load(Path::new(path))?;
    if h.domain != *g.domain() {
        return Err(CliError::Invalid(format!("snapshot {path} was written on a different grid")));
    }
    Ok(s)
}

/// Runs the experiment inside a pool of `workers` threads and writes all
/// artifacts into a fresh run directory.
pub fn run(cfg: &RunConfig, workers: Option<usize>) -> Result<RunOutcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invalid(format!("worker pool: {e}")))?;
    let setup = build_setup(cfg)?;
    let dir = artifacts::fresh_run_dir(Path::new(&cfg.run.output_dir), cfg.experiment.name())?;
    artifacts::write_manifest(&dir, cfg)?;
    let result = pool.install(|| execute(cfg, &setup, &dir));
    match result {
        Ok(summary) => Ok(RunOutcome { dir, summary }),
        Err(e) => {
            #[derive(Serialize)]
            struct Failure {
                exit_code: u8,
                error: String,
            }
            write_json(&dir, "error.json", &Failure { exit_code: e.exit_code(), error: e.to_string() })?;
            Err(e)
        }
    }
}

fn execute(cfg: &RunConfig, s: &Setup, dir: &Path) -> Result<Vec<String>, CliError> {
    match &cfg.experiment {
        Experiment::Deterministic { export_states } => {
            let traj = dynamics::solve_deterministic(&s.model, &s.u0, &s.forcing, &s.cfg)?;
            artifacts::write_trajectory(dir, "", &s.model.grid, &traj, *export_states)?;
            Ok(vec![trajectory_line("deterministic", &traj)])
        }
        Experiment::Stochastic { paths, export_states } => stochastic(s, dir, *paths, *export_states),
        Experiment::SkeletonLdp { control, export_states } => {
            let h = control_path(control, &s.cfg)?;
            let traj = dynamics::solve_skeleton_ldp(&s.model, &s.u0, &s.forcing, &s.noise, &h, &s.cfg)?;
            artifacts::write_trajectory(dir, "", &s.model.grid, &traj, *export_states)?;
            Ok(vec![trajectory_line("skeleton", &traj), format!("action {:e}", deviations::action(&h))])
        }
        Experiment::SkeletonMdp { control, export_states } => {
            let h = control_path(control, &s.cfg)?;
            let base = dynamics::solve_deterministic(&s.model, &s.u0, &s.forcing, &s.cfg)?;
            let traj = dynamics::solve_skeleton_mdp(&s.model, &base, &s.noise, &h, &s.cfg)?;
            artifacts::write_trajectory(dir, "", &s.model.grid, &traj, *export_states)?;
            Ok(vec![trajectory_line("linear skeleton", &traj), format!("action {:e}", deviations::action(&h))])
        }
        Experiment::Clt { eps, paths } => {
            let rep = deviations::clt_rate_study(&s.model, &s.u0, &s.forcing, &s.noise, &s.cfg, eps, *paths, s.seed, Execution::Parallel)?;
            let mut csv = String::from("eps,n_ok,n_blowup,median_sup_v,median_error\n");
            for r in &rep.rows {
                csv.push_str(&format!("{:e},{},{},{:e},{:e}\n", r.eps, r.n_ok, r.n_blowup, r.median_sup_v, r.median_error));
            }
            write_text(dir, "clt.csv", &csv)?;
            write_json(dir, "clt.json", &rep)?;
            Ok(vec![format!("log-log slope {:.4} (V norm), {:.4} (with D(A) part)", rep.slope_sup_v, rep.slope_error)])
        }
        Experiment::RateMdp(spec) => rate(s, dir, spec, false),
        Experiment::RateLdp(spec) => rate(s, dir, spec, true),
        Experiment::McScaling(spec) => mc_scaling(s, dir, spec),
        Experiment::Verify(spec) => verify_suite(s, dir, spec),
    }
}

fn trajectory_line(label: &str, traj: &Trajectory) -> String {
    let d = traj.diagnostics.last().expect("trajectory has diagnostics");
    format!("{label}: {} steps to t = {}, final energy {:e}", traj.n_steps, d.time, d.energy)
}

fn control_path(spec: &ControlSpec, cfg: &IntegratorConfig) -> Result<ControlPath, CliError> {
    let n = spec.blocks.len();
    let times = (0..=n).map(|i| cfg.t_end * i as f64 / n as f64).collect();
    Ok(ControlPath::new(times, spec.blocks.clone())?)
}

#[derive(Serialize)]
struct EnsembleSummary {
    paths: usize,
    mean_final_energy: f64,
    var_final_energy: f64,
}

fn stochastic(s: &Setup, dir: &Path, paths: usize, export_states: bool) -> Result<Vec<String>, CliError> {
    let rows = exec::try_map_range(Execution::Parallel, paths, |p| {
        let stream = WienerStream::new(s.seed, p as u64, s.noise.m());
        let traj = dynamics::solve_stochastic(&s.model, &s.u0, &s.forcing, &s.noise, stream, &s.cfg)?;
        let max_energy = traj.diagnostics.iter().map(|d| d.energy).fold(0.0, f64::max);
        let last = *traj.diagnostics.last().expect("trajectory has diagnostics");
        Ok::<_, pelab_core::CoreError>((last.energy, last.v_norm2, max_energy, (p == 0).then_some(traj)))
    })?;
    let mut csv = String::from("path,final_energy,final_v_norm2,max_energy\n");
    for (p, r) in rows.iter().enumerate() {
        csv.push_str(&format!("{p},{:e},{:e},{:e}\n", r.0, r.1, r.2));
    }
    write_text(dir, "ensemble.csv", &csv)?;
    let energies: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (mean, var) = stats::mean_var(&energies);
    write_json(dir, "summary.json", &EnsembleSummary { paths, mean_final_energy: mean, var_final_energy: var })?;
    if let Some(traj) = rows.into_iter().next().and_then(|r| r.3) {
        artifacts::write_trajectory(dir, "path0_", &s.model.grid, &traj, export_states)?;
    }
    Ok(vec![format!("{paths} paths, mean final energy {mean:e}")])
}

fn rate(s: &Setup, dir: &Path, spec: &RateSpec, ldp: bool) -> Result<Vec<String>, CliError> {
    let g = &s.model.grid;
    let base = dynamics::solve_deterministic(&s.model, &s.u0, &s.forcing, &s.cfg)?;
    let (observation, target) = match &spec.target {
        TargetSpec::FullState { metric, modes, snapshot } => {
            let offset = match snapshot {
                Some(p) => load_state(g, p)?,
                None => s.model.project(&config::modes_state(g, modes)),
            };
            let target = if ldp { base.final_state() + &offset } else { offset };
            (Observation::FullState { metric: *metric }, ObsValue::State(target))
        }
        TargetSpec::Functional { psi, value } => {
            let phi = s.model.project(&psi.state(g));
            (Observation::Functional { psi: deviations::coefficient_functional(&s.model, &phi) }, ObsValue::Scalar(*value))
        }
    };
    let mut problem = RateProblem::new(observation, target, spec.n_blocks);
    problem.tol = spec.tol;
    problem.max_iter = spec.max_iter;
    problem.max_outer = spec.max_outer;
    let rep = if ldp {
        deviations::minimize_rate_ldp(&s.model, &s.noise, &s.u0, &s.forcing, &s.cfg, &problem)?
    } else {
        deviations::minimize_rate_mdp(&s.model, &s.noise, &base, &s.cfg, &problem)?
    };
    write_rate(dir, &rep)?;
    let bound = if rep.upper_bound { " (upper bound)" } else { "" };
    Ok(vec![format!(
        "action {:e}{bound}, relative residual {:e}, {} iterations, converged {}",
        rep.action, rep.relative_residual, rep.iterations, rep.converged
    )])
}

fn write_rate(dir: &Path, rep: &RateReport) -> Result<(), CliError> {
    write_json(dir, "rate.json", rep)?;
    let mut h = String::from("block,t0,t1");
    for k in 0..rep.h_star.m() {
        h.push_str(&format!(",h{k}"));
    }
    h.push('\n');
    for (i, c) in rep.h_star.coeffs.iter().enumerate() {
        h.push_str(&format!("{i},{:e},{:e}", rep.h_star.times[i], rep.h_star.times[i + 1]));
        for x in c {
            h.push_str(&format!(",{x:e}"));
        }
        h.push('\n');
    }
    write_text(dir, "h_star.csv", &h)?;
    let mut hist = String::from("iteration,objective\n");
    for (i, f) in rep.objective_history.iter().enumerate() {
        hist.push_str(&format!("{i},{f:e}\n"));
    }
    write_text(dir, "history.csv", &hist)
}

#[derive(Serialize)]
struct ExactRow {
    eps: f64,
    /// `eps log P` of the exact discrete Gaussian endpoint.
    exact_eps_log_p: f64,
    within_ci: bool,
}

#[derive(Serialize)]
struct ScalingSummary<'a> {
    rate: f64,
    mean: f64,
    unit_variance: f64,
    table: &'a ScalingTable,
    exact: Vec<ExactRow>,
}

fn mc_scaling(s: &Setup, dir: &Path, spec: &McSpec) -> Result<Vec<String>, CliError> {
    let ou = ScalarOu { kappa: spec.kappa, amp: spec.amp, dt: spec.dt, n_steps: spec.n_steps, x0: spec.x0 };
    let rate = ou.rate(spec.threshold);
    let table = deviations::mc_ldp_scaling(&spec.eps, spec.paths, Some(-rate), spec.confidence, Execution::Parallel, |eps, p| {
        Ok(ou.endpoint(eps, &WienerStream::new(s.seed, p, 1))? >= spec.threshold)
    })?;
    write_text(dir, "scaling.csv", &table.to_csv())?;
    let exact: Vec<ExactRow> = table
        .rows
        .iter()
        .map(|r| {
            let e = ou.exact_eps_log_p(r.eps, spec.threshold);
            ExactRow { eps: r.eps, exact_eps_log_p: e, within_ci: r.ci_lo <= e && e <= r.ci_hi }
        })
        .collect();
    let (mean, v1) = ou.endpoint_law(1.0);
    let mut lines = vec![format!("rate I = {rate:.6}")];
    for (r, e) in table.rows.iter().zip(&exact) {
        lines.push(format!(
            "eps {:>6}: {} hits, eps log p = {:.5} in [{:.5}, {:.5}], exact {:.5}",
            r.eps, r.hits, r.eps_log_p, r.ci_lo, r.ci_hi, e.exact_eps_log_p
        ));
    }
    write_json(dir, "scaling.json", &ScalingSummary { rate, mean, unit_variance: v1, table: &table, exact })?;
    Ok(lines)
}

#[derive(Serialize)]
struct VerifySummary {
    identities: bool,
    anisotropic: Option<bool>,
    trilinear: Option<bool>,
    gronwall_decreasing: bool,
    gronwall_ratio_spread: f64,
    constants: bool,
}

fn verify_suite(s: &Setup, dir: &Path, spec: &VerifySpec) -> Result<Vec<String>, CliError> {
    let m = &s.model;
    let g = &m.grid;
    let ids = verify::check_identities(m, spec.identity_samples, s.seed, spec.tolerance, Execution::Parallel);
    write_json(dir, "identities.json", &ids)?;
    let band = FieldBand::dealiased(g.nx().min(g.ny()));
    for c in ids.checks.iter().filter(|c| !c.pass) {
        let u = m.project(&verify::random_state(g, s.seed, 3 * c.worst_sample, band));
        snapshot::save(&dir.join(format!("identity_{}_sample{}.snap", c.name, c.worst_sample)), g, &u, Representation::Physical)?;
    }
    let mut lines = vec![format!("identities: {}", if ids.pass { "pass" } else { "FAIL" })];
    let (mut aniso_pass, mut tri_pass) = (None, None);
    if spec.run_ratios {
        let study = RatioStudy {
            length: g.length(),
            depth: g.depth(),
            coarse: spec.ratio_coarse,
            nz: spec.ratio_nz,
            n_samples: spec.ratio_samples,
            seed: s.seed,
            max_growth: spec.max_growth,
            ..Default::default()
        };
        let aniso = verify::check_anisotropic(&study, Execution::Parallel)?;
        write_json(dir, "anisotropic.json", &aniso)?;
        let tri = verify::check_b_estimates(&study, Execution::Parallel)?;
        write_json(dir, "trilinear.json", &tri)?;
        for row in aniso.rows.iter().chain(&tri.rows) {
            lines.push(format!("{:?}: max ratio {:?}, change {:.4}", row.case, row.max_ratio, row.rel_change));
        }
        aniso_pass = Some(aniso.pass);
        tri_pass = Some(tri.pass);
    }
    let gr = verify::check_gronwall(&spec.gronwall, true, Execution::Parallel)?;
    write_json(dir, "gronwall.json", &gr)?;
    lines.push(format!("gronwall: fitted C {:.4}, spread {:.3}, decreasing {}", gr.fitted_c, gr.ratio_spread, gr.strictly_decreasing));
    let states: Vec<State> =
        (0..spec.constants_samples.max(2)).map(|i| m.project(&verify::random_state(g, s.seed, 1000 + i as u64, band))).collect();
    let consts = noise::estimate_constants(m, &s.noise, &states)?;
    write_json(dir, "constants.json", &consts)?;
    lines.push(format!("noise constants: {}", if consts.pass { "pass" } else { "FAIL" }));
    let summary = VerifySummary {
        identities: ids.pass,
        anisotropic: aniso_pass,
        trilinear: tri_pass,
        gronwall_decreasing: gr.strictly_decreasing,
        gronwall_ratio_spread: gr.ratio_spread,
        constants: consts.pass,
    };
    write_json(dir, "summary.json", &summary)?;
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_blocks_cover_the_horizon() {
        let cfg = IntegratorConfig { dt: 0.1, t_end: 1.0, ..Default::default() };
        let h = control_path(&ControlSpec { blocks: vec![vec![1.0], vec![2.0]] }, &cfg).unwrap();
        assert_eq!(h.times, vec![0.0, 0.5, 1.0]);
        assert_eq!(h.at(0.7), &[2.0]);
        assert!(control_path(&ControlSpec { blocks: vec![vec![1.0], vec![]] }, &cfg).is_err());
    }

    #[test]
    fn mc_rows_report_exact_values() {
        let ou = ScalarOu { kappa: 1.0, amp: 1.0, dt: 0.01, n_steps: 100, x0: 0.0 };
        let e = ou.exact_eps_log_p(0.1, 0.3);
        assert!(e < 0.0 && e.is_finite());
        assert!(stats::normal_sf(0.0) == 0.5);
    }
}
