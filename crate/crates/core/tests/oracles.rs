use std::f64::consts::PI;

use pelab_core::calc;
use pelab_core::deviations::ScalarOu;
use pelab_core::dynamics::{self, IntegratorConfig, LambdaRule};
use pelab_core::field::sample;
use pelab_core::noise::{self, NoiseFamily, NoiseModel, ShippedMode, WienerStream};
use pelab_core::stats;
use pelab_core::verify::{self, FieldBand};
use pelab_core::{Domain, Execution, Forcing, Grid, Model, PhysicalParams, State};

fn box_model(n: usize, nz: usize, params: PhysicalParams) -> Model {
    let g = Grid::new(Domain::new(2.0 * PI, 1.0, n, n, nz).unwrap()).unwrap();
    Model::new(g, params).unwrap()
}

/// Temperature alone, no buoyancy coupling and no surface flux: a pure heat equation.
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

fn decay_error(m: &Model, phi: &[f64], rate: f64, t_end: f64, dt: f64) -> (f64, f64) {
    let cfg = IntegratorConfig { dt, t_end, eps: 0.0, ..Default::default() };
    let coarse = dynamics::solve_deterministic(m, &temperature_only(m, phi.to_vec()), &Forcing::none(), &cfg).unwrap();
    let cfg2 = IntegratorConfig { dt: dt / 2.0, ..cfg };
    let fine = dynamics::solve_deterministic(m, &temperature_only(m, phi.to_vec()), &Forcing::none(), &cfg2).unwrap();
    let exact = (-rate * t_end).exp();
    let c1 = coefficient(m, &coarse.final_state().t, phi);
    let c2 = coefficient(m, &fine.final_state().t, phi);
    let richardson = 2.0 * c2 - c1;
    ((c1 - exact).abs() / exact, (richardson - exact).abs() / exact)
}

#[test]
fn horizontal_heat_mode_decays_at_the_analytic_rate() {
    let m = box_model(8, 5, heat_params());
    let phi = sample(&m.grid, |x, y, _| (x + 2.0 * y).cos());
    let rate = m.params.mu_t * 5.0;
    let (plain, rich) = decay_error(&m, &phi, rate, 2.0, 0.05);
    assert!(rich < 0.01 * plain.max(1e-3), "plain {plain} richardson {rich}");
    assert!(rich < 1e-3);
}

#[test]
fn vertical_heat_mode_decays_at_the_analytic_rate() {
    let m = box_model(4, 33, heat_params());
    let phi = sample(&m.grid, |_, _, z| (PI * (z + 1.0)).cos());
    let rate = m.params.nu_t * PI * PI;
    let (_, rich) = decay_error(&m, &phi, rate, 1.0, 0.02);
    assert!(rich < 0.01, "richardson error {rich}");
}

fn single_temperature_mode(m: &Model) -> NoiseModel {
    let mode = ShippedMode { kx: 1, ky: 0, kz: 0, phase: 0.0, angle: 0.0, a_v: 0.0, a_t: 1.0, b: 0.0, c: 0.0, grad_dir: 0 };
    NoiseModel::new(m, NoiseFamily::Shipped { modes: vec![mode] }, None).unwrap()
}

#[test]
fn full_model_reduces_to_the_scalar_recursion() {
    let m = box_model(8, 3, heat_params());
    let noise = single_temperature_mode(&m);
    let phi = sample(&m.grid, |x, _, _| x.cos());
    let cfg = IntegratorConfig { dt: 0.1, t_end: 2.0, eps: 0.3, ..Default::default() };
    let ou = ScalarOu { kappa: m.params.mu_t, amp: 1.0, dt: cfg.dt, n_steps: cfg.n_steps(), x0: 0.7 };
    for id in 0..5 {
        let stream = WienerStream::new(9, id, 1);
        let run = dynamics::solve_stochastic(&m, &temperature_only(&m, phi.iter().map(|p| 0.7 * p).collect()), &Forcing::none(), &noise, stream, &cfg).unwrap();
        let c = coefficient(&m, &run.final_state().t, &phi);
        let c_ref = ou.endpoint(cfg.eps, &stream).unwrap();
        assert!((c - c_ref).abs() <= 1e-12 * c_ref.abs().max(1.0), "{c} vs {c_ref}");
    }
}

#[test]
fn ou_endpoint_variance_matches_the_closed_form() {
    let m = box_model(4, 3, heat_params());
    let noise = single_temperature_mode(&m);
    let phi = sample(&m.grid, |x, _, _| x.cos());
    let kappa = m.params.mu_t;
    let dt = 0.01 / kappa;
    let cfg = IntegratorConfig { dt, t_end: 50.0 * dt, eps: 0.2, ..Default::default() };
    let u0 = State::zeros(&m.grid);
    let n_paths = 10_000;
    let ends = pelab_core::exec::map_range(Execution::default(), n_paths, |p| {
        let run = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, WienerStream::new(21, p as u64, 1), &cfg).unwrap();
        coefficient(&m, &run.final_state().t, &phi)
    });
    let (mean, var) = stats::mean_var(&ends);
    let t = cfg.t_end;
    let exact = cfg.eps / (2.0 * kappa) * (1.0 - (-2.0 * kappa * t).exp());
    let se_var = exact * (2.0 / (n_paths as f64 - 1.0)).sqrt();
    assert!((var - exact).abs() <= 3.0 * se_var, "var {var} exact {exact} se {se_var}");
    assert!(mean.abs() <= 3.0 * (exact / n_paths as f64).sqrt());
}

#[test]
fn wiener_increments_have_the_right_moments() {
    let dt = 0.01;
    let n = 20_000;
    let mut xs = Vec::with_capacity(2 * n);
    for s in 0..n as u64 {
        xs.extend(WienerStream::new(3, 8, 2).increment(s, dt).unwrap());
    }
    let (mean, var) = stats::mean_var(&xs);
    let k = xs.len() as f64;
    assert!(mean.abs() <= 4.0 * (dt / k).sqrt());
    assert!((var - dt).abs() <= 4.0 * dt * (2.0 / k).sqrt());
    // different streams are different
    assert_ne!(WienerStream::new(3, 8, 2).increment(0, dt).unwrap(), WienerStream::new(3, 9, 2).increment(0, dt).unwrap());
}

#[test]
fn energy_decays_and_the_constraint_holds() {
    let params = PhysicalParams { beta_t_g: 0.0, ..Default::default() };
    let m = box_model(16, 9, params);
    let u0 = m.project(&verify::random_state(&m.grid, 4, 0, FieldBand::dealiased(16)));
    let cfg = IntegratorConfig { dt: 1e-3, t_end: 0.1, eps: 0.0, ..Default::default() };
    let run = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let e0 = run.diagnostics[0].energy;
    for w in run.diagnostics.windows(2) {
        assert!(w[1].energy <= w[0].energy * (1.0 + 1e-12), "{} -> {}", w[0].energy, w[1].energy);
    }
    assert!(run.diagnostics.iter().all(|d| d.constraint <= 1e-12 * e0.sqrt().max(1.0)));
}

#[test]
fn zero_noise_is_bit_identical_to_the_deterministic_run() {
    let m = box_model(8, 5, PhysicalParams::default());
    let u0 = m.project(&verify::random_state(&m.grid, 1, 0, FieldBand::dealiased(8)));
    let noise = NoiseModel::shipped_default(&m);
    let cfg = IntegratorConfig { dt: 0.01, t_end: 0.1, eps: 0.0, ..Default::default() };
    let det = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let sto = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, WienerStream::new(1, 0, noise.m()), &cfg).unwrap();
    assert_eq!(det.states, sto.states);
}

#[test]
fn direct_and_differenced_deviations_agree() {
    let m = box_model(8, 5, PhysicalParams::default());
    let u0 = m.project(&verify::random_state(&m.grid, 2, 0, FieldBand::dealiased(8)));
    let noise = NoiseModel::shipped_default(&m);
    let cfg = IntegratorConfig { dt: 0.01, t_end: 0.2, eps: 1e-4, lambda_rule: LambdaRule::Power { exponent: 0.25 }, ..Default::default() };
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let stream = WienerStream::new(6, 2, noise.m());
    let ueps = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, stream, &cfg).unwrap();
    let diffed = dynamics::deviation_from_pair(&m, &ueps, &base, &cfg).unwrap();
    let direct = dynamics::solve_deviation(&m, &base, &noise, stream, &cfg).unwrap();
    let scale = direct.sup_v_norm(&m);
    let worst = diffed
        .states
        .iter()
        .zip(&direct.states)
        .map(|(a, b)| dynamics::v_norm2(&m, &(a - b)).sqrt())
        .fold(0.0, f64::max);
    assert!(scale > 0.0);
    assert!(worst <= 5.0 * cfg.dt * scale, "{worst} vs {scale}");
}

#[test]
fn mismatched_streams_are_rejected() {
    let m = box_model(4, 3, PhysicalParams::default());
    let u0 = State::zeros(&m.grid);
    let noise = NoiseModel::shipped_default(&m);
    let cfg = IntegratorConfig { dt: 0.1, t_end: 0.2, ..Default::default() };
    let a = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, WienerStream::new(1, 0, noise.m()), &cfg).unwrap();
    let b = dynamics::solve_stochastic(&m, &u0, &Forcing::none(), &noise, WienerStream::new(1, 1, noise.m()), &cfg).unwrap();
    assert!(dynamics::ensure_coupled(&a, &b).is_err());
    assert!(dynamics::ensure_coupled(&a, &a).is_ok());
}

#[test]
fn interaction_terms_average_consistently() {
    let m = box_model(8, 65, PhysicalParams::default());
    let g = &m.grid;
    let band = FieldBand { k_max: 2, n_max: 2, decay: 1.0 };
    let su = verify::random_state(g, 7, 0, band);
    let sv = verify::random_state(g, 7, 1, band);
    // A2 J2 = -J1
    let j1 = m.interaction_j1(&su.v, &sv.v);
    let j2 = m.interaction_j2(&su.v, &sv.v);
    let scale = calc::dot2(g, &j1[0], &j1[0]).sqrt() + calc::dot2(g, &j1[1], &j1[1]).sqrt();
    for c in 0..2 {
        let a = calc::vertical_mean(g, &j2[c]);
        let err: f64 = a.iter().zip(&j1[c]).map(|(x, y)| (x + y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12 * scale.max(1.0), "{err}");
    }
    // A2 [B2(u~, v~) + J2(u, v)] = 0 up to the vertical discretization
    let su_t = m.split_barotropic(&su.v).vtilde;
    let sv_t = m.split_barotropic(&sv.v).vtilde;
    let b2 = m.b2(&su_t, &sv_t);
    for c in 0..2 {
        let sum: Vec<f64> = b2[c].iter().zip(&j2[c]).map(|(a, b)| a + b).collect();
        let a = calc::vertical_mean(g, &sum);
        let err = calc::dot2(g, &a, &a).sqrt();
        assert!(err <= 1e-3 * scale, "{err} vs {scale}");
    }
}

#[test]
fn additive_noise_needs_no_eta() {
    let m = box_model(8, 5, PhysicalParams::default());
    let mode = ShippedMode { kx: 1, ky: 1, kz: 1, phase: 0.3, angle: 0.7, a_v: 0.8, a_t: 0.5, b: 0.0, c: 0.0, grad_dir: 0 };
    let n = NoiseModel::new(&m, NoiseFamily::Shipped { modes: vec![mode] }, None).unwrap();
    let states: Vec<State> = (0..6).map(|i| m.project(&verify::random_state(&m.grid, 5, i, FieldBand::dealiased(8)))).collect();
    let rep = noise::estimate_constants(&m, &n, &states).unwrap();
    assert!(rep.pass, "{rep:?}");
    for f in &rep.fits {
        if let Some(eta) = f.fitted_eta {
            assert_eq!(eta, 0.0, "{}", f.name);
        }
    }
    let lip = rep.fits.iter().find(|f| f.name == "lipschitz_h").unwrap();
    assert_eq!(lip.fitted_c, 0.0);
}

#[test]
fn scalar_multiple_noise_has_lipschitz_constant_c_squared() {
    let m = box_model(8, 5, PhysicalParams::default());
    let c = 0.6;
    let n = NoiseModel::new(&m, NoiseFamily::ScalarMultiple { c }, None).unwrap();
    let states: Vec<State> = (0..6).map(|i| m.project(&verify::random_state(&m.grid, 5, i, FieldBand::dealiased(8))).scaled(50.0)).collect();
    let rep = noise::estimate_constants(&m, &n, &states).unwrap();
    assert!(rep.pass, "{rep:?}");
    let bound = rep.fits.iter().find(|f| f.name == "bound_h").unwrap();
    assert!((bound.fitted_c - c * c).abs() <= 1e-3 * c * c, "{}", bound.fitted_c);
    let lip = rep.fits.iter().find(|f| f.name == "lipschitz_h").unwrap();
    assert!(lip.fitted_c > 0.0 && lip.fitted_c <= c * c * (1.0 + 1e-12));
}

#[test]
fn identities_hold_on_random_states() {
    let m = box_model(16, 9, PhysicalParams::default());
    let rep = verify::check_identities(&m, 10, 3, 1e-8, Execution::default());
    assert!(rep.pass, "{rep:?}");
}

#[test]
fn estimate_ratios_are_reported_for_every_case() {
    let study = verify::RatioStudy { coarse: 8, nz: 5, n_samples: 50, ..Default::default() };
    let rep = verify::check_anisotropic(&study, Execution::default()).unwrap();
    assert_eq!(rep.rows.len(), 5);
    assert!(rep.counterexamples.is_empty());
    assert!(rep.rows.iter().all(|r| r.max_ratio.iter().all(|x| x.is_finite() && *x > 0.0)));
    assert!(verify::check_anisotropic(&verify::RatioStudy { n_samples: 10, ..study }, Execution::default()).is_err());
}
