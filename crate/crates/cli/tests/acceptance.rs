//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when an asserted criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pelab_core::calc;
use pelab_core::deviations::{self, Metric, ObsValue, Observation, RateProblem, ScalarOu};
use pelab_core::dynamics::{self, IntegratorConfig};
use pelab_core::field::sample;
use pelab_core::noise::{ControlPath, NoiseFamily, NoiseModel, ShippedMode, WienerStream};
use pelab_core::verify::{self, FieldBand, GronwallScenario, RatioStudy};
use pelab_core::{exec, stats, Domain, Execution, Forcing, Grid, Model, PhysicalParams, State};

const IDENTITY_TOL: f64 = 1e-8;
const IDENTITY_SAMPLES: usize = 100;
const RATIO_SAMPLES: usize = 200;
const RATIO_GROWTH: f64 = 0.10;
const HEAT_TOL: f64 = 0.01;
const OU_PATHS: usize = 10_000;
const OU_SIGMAS: f64 = 3.0;
const MDP_TOL: f64 = 1e-6;
const LDP_MDP_TOL: f64 = 1e-8;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_DIRS: usize = 10;
const MC_PATHS: u64 = 100_000;
const MC_EPS: [f64; 3] = [0.1, 0.05, 0.02];
const MC_THRESHOLD: f64 = 0.3;
const RATE_AGREEMENT: f64 = 1e-6;
const CLT_PATHS: usize = 32;
const CLT_EPS: [f64; 3] = [1e-2, 1e-3, 1e-4];
const CLT_SLOPE: (f64, f64) = (0.35, 0.65);
const GRONWALL_SPREAD: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn box_model(n: usize, nz: usize, params: PhysicalParams) -> Model {
    let g = Grid::new(Domain::new(2.0 * PI, 1.0, n, n, nz).unwrap()).unwrap();
    Model::new(g, params).unwrap()
}

fn heat_params() -> PhysicalParams {
    PhysicalParams { beta_t_g: 0.0, alpha: 0.0, ..Default::default() }
}

fn temperature_only(m: &Model, t: Vec<f64>) -> State {
    let mut s = State::zeros(&m.grid);
    s.t = t;
    s
}

fn coefficient(m: &Model, t: &[f64], phi: &[f64]) -> f64 {
    calc::dot3(&m.grid, t, phi) / calc::dot3(&m.grid, phi, phi)
}

fn single_temperature_mode(m: &Model) -> NoiseModel {
    let mode = ShippedMode { kx: 1, ky: 0, kz: 0, phase: 0.0, angle: 0.0, a_v: 0.0, a_t: 1.0, b: 0.0, c: 0.0, grad_dir: 0 };
    NoiseModel::new(m, NoiseFamily::Shipped { modes: vec![mode] }, None).unwrap()
}

fn identities() -> Outcome {
    let m = box_model(16, 9, PhysicalParams::default());
    let rep = verify::check_identities(&m, IDENTITY_SAMPLES, 1, IDENTITY_TOL, Execution::Parallel);
    let worst = rep.checks.iter().map(|c| c.max_defect).fold(0.0, f64::max);
    let failing: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    outcome(rep.pass, format!("{} checks, worst defect {worst:.2e} <= {IDENTITY_TOL:e}, failing {failing:?}", rep.checks.len()))
}

fn ratio_stability() -> Outcome {
    let study = RatioStudy { n_samples: RATIO_SAMPLES, max_growth: RATIO_GROWTH, ..Default::default() };
    let a = verify::check_anisotropic(&study, Execution::Parallel).unwrap();
    let b = verify::check_b_estimates(&study, Execution::Parallel).unwrap();
    let rows: Vec<_> = a.rows.iter().chain(&b.rows).collect();
    let worst = rows.iter().map(|r| r.rel_change).fold(0.0, f64::max);
    let changes: Vec<String> = rows.iter().map(|r| format!("{:?} {:.3}", r.case, r.rel_change)).collect();
    outcome(
        a.pass && b.pass,
        format!("{:?} at nz {:?}, worst change {worst:.4} <= {RATIO_GROWTH} [{}]", a.resolutions, a.nz_levels, changes.join(", ")),
    )
}

fn heat_decay_error(m: &Model, phi: &[f64], rate: f64, t_end: f64, dt: f64) -> f64 {
    let cfg = IntegratorConfig { dt, t_end, eps: 0.0, ..Default::default() };
    let run = dynamics::solve_deterministic(m, &temperature_only(m, phi.to_vec()), &Forcing::none(), &cfg).unwrap();
    let exact = (-rate * t_end).exp();
    (coefficient(m, &run.final_state().t, phi) - exact).abs() / exact
}

fn linear_oracles() -> Outcome {
    let mut worst_heat = 0.0f64;
    let horizontal = box_model(16, 5, heat_params());
    for (kx, ky) in [(1.0, 0.0), (1.0, 2.0), (3.0, 1.0)] {
        let phi = sample(&horizontal.grid, |x, y, _| (kx * x + ky * y).cos());
        let rate = horizontal.params.mu_t * (kx * kx + ky * ky);
        worst_heat = worst_heat.max(heat_decay_error(&horizontal, &phi, rate, 2.0, 0.01));
    }
    let vertical = box_model(4, 33, heat_params());
    for n in [1.0, 2.0] {
        let phi = sample(&vertical.grid, |_, _, z| (n * PI * (z + 1.0)).cos());
        let rate = vertical.params.nu_t * n * n * PI * PI;
        worst_heat = worst_heat.max(heat_decay_error(&vertical, &phi, rate, 0.5, 0.0025));
    }

    let m = box_model(4, 3, heat_params());
    let noise = single_temperature_mode(&m);
    let phi = sample(&m.grid, |x, _, _| x.cos());
    let kappa = m.params.mu_t;
    let dt = 0.01 / kappa;
    let cfg = IntegratorConfig { dt, t_end: 50.0 * dt, eps: 0.2, ..Default::default() };
    let u0 = State::zeros(&m.grid);
    let ends = exec::map_range(Execution::Parallel, OU_PATHS, |p| {
        let run = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, WienerStream::new(21, p as u64, 1), &cfg).unwrap();
        coefficient(&m, &run.final_state().t, &phi)
    });
    let (_, var) = stats::mean_var(&ends);
    let exact = cfg.eps / (2.0 * kappa) * (1.0 - (-2.0 * kappa * cfg.t_end).exp());
    let se = exact * (2.0 / (OU_PATHS as f64 - 1.0)).sqrt();
    let sigmas = (var - exact).abs() / se;
    outcome(
        worst_heat <= HEAT_TOL && sigmas <= OU_SIGMAS,
        format!(
            "heat decay worst rel error {worst_heat:.2e} <= {HEAT_TOL}; OU variance {var:.5} vs {exact:.5}, {sigmas:.2} sigma <= {OU_SIGMAS} ({OU_PATHS} paths)"
        ),
    )
}

/// Grid values weighted so the Euclidean product is the quadrature product.
fn flat(m: &Model, s: &State) -> Vec<f64> {
    let g = &m.grid;
    let nxy = g.nxy();
    let mut out = Vec::new();
    for c in [&s.v[0], &s.v[1], &s.t] {
        for (i, x) in c.iter().enumerate() {
            out.push(x * (g.weights()[i / nxy] * g.cell_area()).sqrt());
        }
    }
    out
}

fn tiny_u0(m: &Model) -> State {
    let g = &m.grid;
    m.project(&State {
        v: [sample(g, |x, y, z| (x + y).sin() * (1.0 + z)), sample(g, |x, _, _| x.cos())],
        t: sample(g, |_, y, z| y.sin() * z),
    })
}

fn mdp_exactness() -> Outcome {
    let m = box_model(4, 3, PhysicalParams::default());
    let mode = ShippedMode { kx: 1, ky: 1, kz: 1, phase: 0.3, angle: 0.7, a_v: 0.8, a_t: 0.5, b: 0.2, c: 0.1, grad_dir: 0 };
    let noise = NoiseModel::new(&m, NoiseFamily::Shipped { modes: vec![mode] }, None).unwrap();
    let cfg = IntegratorConfig { dt: 0.05, t_end: 0.4, ..Default::default() };
    assert_eq!(cfg.n_steps(), 8);
    let base = dynamics::solve_deterministic(&m, &tiny_u0(&m), &Forcing::none(), &cfg).unwrap();
    let n_blocks = 2;
    let blocks = ControlPath::zeros(cfg.t_end, n_blocks, 1);
    let cols: Vec<Vec<f64>> = (0..n_blocks)
        .map(|j| {
            let mut x = vec![0.0; n_blocks];
            x[j] = 1.0;
            flat(&m, &dynamics::mdp_endpoint(&m, &base, &noise, &blocks.from_scaled_vec(&x), &cfg).unwrap())
        })
        .collect();
    let gmat = DMatrix::from_fn(cols[0].len(), n_blocks, |i, j| cols[j][i]);
    let sv = gmat.singular_values();
    let target = dynamics::mdp_endpoint(&m, &base, &noise, &blocks.from_scaled_vec(&[1.0, -0.6]), &cfg).unwrap();
    let x_star = gmat.clone().pseudo_inverse(1e-12).unwrap() * DVector::from_vec(flat(&m, &target));
    let oracle = 0.5 * x_star.norm_squared();
    let solve = |t: State| {
        let p = RateProblem::new(Observation::FullState { metric: Metric::L2 }, ObsValue::State(t), n_blocks);
        deviations::minimize_rate_mdp(&m, &noise, &base, &cfg, &p).unwrap()
    };
    let rep = solve(target.clone());
    let rel = (rep.action - oracle).abs() / oracle;
    let a = 2.5;
    let scaled = solve(target.scaled(a));
    let rel_a = (scaled.action - a * a * rep.action).abs() / scaled.action;
    outcome(
        rep.converged && rel <= MDP_TOL && rel_a <= MDP_TOL,
        format!(
            "4x4x3, 8 steps, m=1, {n_blocks} blocks (cond {:.1}): action rel error {rel:.2e}, a^2 scaling rel error {rel_a:.2e} <= {MDP_TOL:e}",
            sv.max() / sv.min()
        ),
    )
}

fn ldp_reduction() -> Outcome {
    let m = box_model(4, 3, PhysicalParams::default()).without_advection();
    let mode = ShippedMode { kx: 1, ky: 0, kz: 1, phase: 0.2, angle: 0.4, a_v: 0.6, a_t: 0.9, b: 0.0, c: 0.0, grad_dir: 0 };
    let mode2 = ShippedMode { kx: 0, ky: 1, kz: 0, phase: 1.1, angle: 2.0, a_v: 0.4, a_t: -0.3, b: 0.0, c: 0.0, grad_dir: 1 };
    let noise = NoiseModel::new(&m, NoiseFamily::Shipped { modes: vec![mode, mode2] }, None).unwrap();
    let cfg = IntegratorConfig { dt: 0.05, t_end: 0.4, ..Default::default() };
    let u0 = tiny_u0(&m);
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let blocks = ControlPath::zeros(cfg.t_end, 1, 2);
    let r_ref = dynamics::mdp_endpoint(&m, &base, &noise, &blocks.from_scaled_vec(&[0.5, -0.2]), &cfg).unwrap();
    let obs = Observation::FullState { metric: Metric::V };
    let mdp = deviations::minimize_rate_mdp(&m, &noise, &base, &cfg, &RateProblem::new(obs.clone(), ObsValue::State(r_ref.clone()), 1)).unwrap();
    let ldp_problem = RateProblem::new(obs, ObsValue::State(base.final_state() + &r_ref), 1);
    let ldp = deviations::minimize_rate_ldp(&m, &noise, &u0, &Forcing::none(), &cfg, &ldp_problem).unwrap();
    let rel = (ldp.action - mdp.action).abs() / mdp.action;

    // gradient of the full nonlinear problem
    let full = box_model(4, 3, PhysicalParams::default());
    let mode3 = ShippedMode { kx: 1, ky: 1, kz: 1, phase: 0.3, angle: 0.7, a_v: 0.8, a_t: 0.5, b: 0.2, c: 0.1, grad_dir: 0 };
    let noise3 = NoiseModel::new(&full, NoiseFamily::Shipped { modes: vec![mode3, mode, mode2] }, None).unwrap();
    let u0f = tiny_u0(&full);
    let problem = RateProblem::new(Observation::FullState { metric: Metric::V }, ObsValue::State(u0f.scaled(0.5)), 2);
    let h = ControlPath::zeros(cfg.t_end, 2, 3).from_scaled_vec(&[0.3, -0.4, 0.8, 0.1, 0.5, -0.2]);
    let errs =
        deviations::ldp_gradient_check(&full, &noise3, &u0f, &Forcing::none(), &cfg, &problem, &h, GRADIENT_DIRS, 1e-5, 7).unwrap();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        mdp.converged && ldp.converged && rel <= LDP_MDP_TOL && errs.len() == GRADIENT_DIRS && worst <= GRADIENT_TOL,
        format!(
            "LDP {:.10e} vs MDP {:.10e}, rel {rel:.2e} <= {LDP_MDP_TOL:e}; gradient worst rel error {worst:.2e} <= {GRADIENT_TOL:e} on {} directions",
            ldp.action,
            mdp.action,
            errs.len()
        ),
    )
}

/// Returns the asserted outcome and the literal "within CI of -I" clause.
fn mc_scaling() -> (Outcome, Outcome) {
    // kappa = mu_t |k|^2 = 1 for the kx = 1 temperature mode
    let params = PhysicalParams { mu_t: 1.0, ..heat_params() };
    let m = box_model(4, 3, params).without_advection();
    let noise = single_temperature_mode(&m);
    let cfg = IntegratorConfig { dt: 0.01, t_end: 1.0, ..Default::default() };
    let ou = ScalarOu { kappa: 1.0, amp: 1.0, dt: cfg.dt, n_steps: cfg.n_steps(), x0: 0.0 };

    let phi = m.project(&temperature_only(&m, sample(&m.grid, |x, _, _| x.cos())));
    let psi = deviations::coefficient_functional(&m, &phi);
    let problem = RateProblem::new(Observation::Functional { psi }, ObsValue::Scalar(MC_THRESHOLD), cfg.n_steps());
    let u0 = State::zeros(&m.grid);
    let solved = deviations::minimize_rate_ldp(&m, &noise, &u0, &Forcing::none(), &cfg, &problem).unwrap();
    let rate = solved.action;
    let rate_rel = (rate - ou.rate(MC_THRESHOLD)).abs() / ou.rate(MC_THRESHOLD);

    let table = deviations::mc_ldp_scaling(&MC_EPS, MC_PATHS, Some(-rate), 0.95, Execution::Parallel, |eps, p| {
        Ok(ou.endpoint(eps, &WienerStream::new(3, p, 1))? >= MC_THRESHOLD)
    })
    .unwrap();
    let (_, v1) = ou.endpoint_law(1.0);
    let mut exact_ok = true;
    let mut link_ok = true;
    let mut literal_ok = true;
    let mut cells = Vec::new();
    for r in &table.rows {
        let exact = ou.exact_eps_log_p(r.eps, MC_THRESHOLD);
        // Gaussian tail at the distance fixed by the solver's rate
        let link = r.eps * stats::log_normal_sf((2.0 * rate / r.eps).sqrt());
        let inside = |x: f64| r.ci_lo <= x && x <= r.ci_hi;
        exact_ok &= !r.one_sided && inside(exact);
        link_ok &= !r.one_sided && inside(link);
        literal_ok &= inside(-rate);
        cells.push(format!("eps {}: {:.4} in [{:.4}, {:.4}], exact {:.4}", r.eps, r.eps_log_p, r.ci_lo, r.ci_hi, exact));
    }
    let asserted = outcome(
        exact_ok && link_ok && rate_rel <= RATE_AGREEMENT,
        format!(
            "{MC_PATHS} paths; rate solver I = {rate:.6} (closed form rel {rate_rel:.1e}, unit variance {v1:.4}); exact Gaussian and solver-based Gaussian tail inside every Wilson CI: {}",
            cells.join("; ")
        ),
    );
    let literal = outcome(
        literal_ok,
        format!("-I = {:.4} inside every Wilson CI (expected to fail: eps log P = -I + O(eps log eps) and the CI is narrower than the prefactor term)", -rate),
    );
    (asserted, literal)
}

fn clt_scaling() -> Outcome {
    let m = box_model(16, 9, PhysicalParams::default());
    let noise = NoiseModel::shipped_default(&m);
    let u0 = m.project(&verify::random_state(&m.grid, 4, 0, FieldBand::dealiased(16)));
    let cfg = IntegratorConfig { dt: 0.01, t_end: 0.5, ..Default::default() };
    let rep = deviations::clt_rate_study(&m, &u0, &Forcing::none(), &noise, &cfg, &CLT_EPS, CLT_PATHS, 4, Execution::Parallel).unwrap();
    let s = rep.slope_sup_v;
    let blowups: usize = rep.rows.iter().map(|r| r.n_blowup).sum();
    outcome(
        (CLT_SLOPE.0..=CLT_SLOPE.1).contains(&s),
        format!("16x16x9, {CLT_PATHS} paths per eps, slope {s:.4} in [{}, {}] ({blowups} blow-ups)", CLT_SLOPE.0, CLT_SLOPE.1),
    )
}

fn gronwall() -> Outcome {
    let sc = GronwallScenario::default();
    let rep = verify::check_gronwall(&sc, true, Execution::Parallel).unwrap();
    outcome(
        rep.strictly_decreasing && rep.ratio_spread <= GRONWALL_SPREAD && rep.hypothesis_max <= sc.c0,
        format!(
            "{} paths, eps {:?}: max_eps P(tau_K <= t) over K {:?} = {:?}; fitted C {:.3}, spread {:.3} <= {GRONWALL_SPREAD}; hypothesis {:.3} <= {}",
            sc.n_paths,
            sc.eps_list,
            rep.k_list,
            rep.max_p.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            rep.fitted_c,
            rep.ratio_spread,
            rep.hypothesis_max,
            sc.c0
        ),
    )
}

fn pelab_run(config: &Path, out: &Path) -> PathBuf {
    let o = Command::new(env!("CARGO_BIN_EXE_pelab")).arg("run").arg(config).arg("--out").arg(out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    PathBuf::from(stdout.lines().find_map(|l| l.strip_prefix("artifacts: ")).unwrap())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ("mc.toml", "schema_version = 1\n[run]\nseed = 5\n[grid]\nnx = 4\nny = 4\nnz = 3\n[experiment]\nkind = \"mc-scaling\"\npaths = 5000\n"),
        (
            "st.toml",
            "schema_version = 1\n[run]\nseed = 5\n[grid]\nnx = 8\nny = 8\nnz = 5\n[integrator]\ndt = 0.01\nt_end = 0.1\neps = 0.01\n[experiment]\nkind = \"stochastic\"\npaths = 4\n",
        ),
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, text) in configs {
        let cfg = tmp.path().join(name);
        fs::write(&cfg, text).unwrap();
        let out = tmp.path().join("runs");
        let a = pelab_run(&cfg, &out);
        let b = pelab_run(&cfg, &out);
        assert_ne!(a, b);
        for entry in fs::read_dir(&a).unwrap() {
            let f = entry.unwrap().file_name();
            let fname = f.to_string_lossy().into_owned();
            if [".csv", ".json", ".ndjson"].iter().any(|e| fname.ends_with(e)) {
                compared += 1;
                if fs::read(a.join(&f)).unwrap() != fs::read(b.join(&f)).unwrap() {
                    differing.push(fname);
                }
            }
        }
    }
    outcome(differing.is_empty() && compared > 0, format!("{compared} CSV/JSON artifacts compared across repeated runs, differing {differing:?}"))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    // the harness passes filters; a run restricted to other targets lists nothing
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("identity suite", identities),
        ("inequality ratio stability", ratio_stability),
        ("linear-regime oracles", linear_oracles),
        ("MDP rate exactness", mdp_exactness),
        ("LDP reduction and adjoint gradient", ldp_reduction),
    ];
    let mut failed = 0;
    let mut report = |id: &str, name: &str, o: &Outcome, secs: f64, asserted: bool| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if asserted { "" } else { " [not asserted]" };
        println!("criterion {id} {tag}{note}: {name}: {} ({secs:.1}s)", o.detail);
        if asserted && !o.pass {
            failed += 1;
        }
    };
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let o = f();
        report(&(i + 1).to_string(), name, &o, t.elapsed().as_secs_f64(), true);
    }
    let t = Instant::now();
    let (mc, literal) = mc_scaling();
    let secs = t.elapsed().as_secs_f64();
    report("6", "Monte Carlo LDP scaling", &mc, secs, true);
    report("6", "Monte Carlo LDP scaling, literal -I clause", &literal, secs, false);
    let rest: Vec<(&str, &str, fn() -> Outcome)> =
        vec![("7", "CLT scaling", clt_scaling), ("8", "uniform stochastic Gronwall", gronwall), ("9", "determinism", determinism)];
    for (id, name, f) in rest {
        let t = Instant::now();
        let o = f();
        report(id, name, &o, t.elapsed().as_secs_f64(), true);
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all asserted criteria passed");
}
