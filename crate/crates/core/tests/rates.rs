use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use pelab_core::deviations::{self, Metric, ObsValue, Observation, RateProblem};
use pelab_core::dynamics::{self, IntegratorConfig};
use pelab_core::field::sample;
use pelab_core::noise::{ControlPath, NoiseFamily, NoiseModel, ShippedMode};
use pelab_core::{Domain, Forcing, Grid, Model, PhysicalParams, State};

fn tiny() -> (Model, NoiseModel, IntegratorConfig, State) {
    let g = Grid::new(Domain::new(2.0 * PI, 1.0, 4, 4, 3).unwrap()).unwrap();
    let m = Model::new(g, PhysicalParams::default()).unwrap();
    let mode = ShippedMode { kx: 1, ky: 1, kz: 1, phase: 0.3, angle: 0.7, a_v: 0.8, a_t: 0.5, b: 0.2, c: 0.1, grad_dir: 0 };
    let mode2 = ShippedMode { kx: 1, ky: 0, kz: 1, phase: 0.2, angle: 0.4, a_v: 0.6, a_t: 0.9, b: 0.0, c: 0.0, grad_dir: 0 };
    let mode3 = ShippedMode { kx: 0, ky: 1, kz: 0, phase: 1.1, angle: 2.0, a_v: 0.4, a_t: -0.3, b: 0.0, c: 0.0, grad_dir: 1 };
    let noise = NoiseModel::new(&m, NoiseFamily::Shipped { modes: vec![mode, mode2, mode3] }, None).unwrap();
    let cfg = IntegratorConfig { dt: 0.05, t_end: 0.4, ..Default::default() };
    let g = &m.grid;
    let u0 = m.project(&State {
        v: [sample(g, |x, y, z| (x + y).sin() * (1.0 + z)), sample(g, |x, _, _| x.cos())],
        t: sample(g, |_, y, z| y.sin() * z),
    });
    (m, noise, cfg, u0)
}

fn flat(m: &Model, s: &State) -> Vec<f64> {
    // weights make the Euclidean product equal the quadrature product
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

#[test]
fn mdp_action_matches_dense_pseudoinverse() {
    let (m, noise, cfg, u0) = tiny();
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    // two blocks keep the columns well separated; finer time blocks of a
    // smoothing flow are nearly collinear and the comparison becomes ill-posed
    let blocks = ControlPath::zeros(cfg.t_end, 2, 3);
    let n = 6;
    let mut cols = Vec::new();
    for j in 0..n {
        let mut x = vec![0.0; n];
        x[j] = 1.0;
        let r = dynamics::mdp_endpoint(&m, &base, &noise, &blocks.from_scaled_vec(&x), &cfg).unwrap();
        cols.push(flat(&m, &r));
    }
    let gmat = DMatrix::from_fn(cols[0].len(), n, |i, j| cols[j][i]);
    let sv = gmat.singular_values();
    assert!(sv.max() / sv.min() < 1e3);
    let h_ref = blocks.from_scaled_vec(&[1.0, -0.5, 0.3, 2.0, 0.1, -1.0]);
    let r_ref = dynamics::mdp_endpoint(&m, &base, &noise, &h_ref, &cfg).unwrap();
    let target = r_ref.scaled(2.0);
    let pinv = gmat.clone().pseudo_inverse(1e-12).unwrap();
    let x_star = &pinv * DVector::from_vec(flat(&m, &target));
    let oracle = 0.5 * x_star.norm_squared();

    let problem = RateProblem::new(Observation::FullState { metric: Metric::L2 }, ObsValue::State(target.clone()), 2);
    let rep = deviations::minimize_rate_mdp(&m, &noise, &base, &cfg, &problem).unwrap();
    assert!(rep.converged, "{rep:?}");
    assert!((rep.action - oracle).abs() <= 1e-6 * oracle, "{} vs {}", rep.action, oracle);

    let problem3 = RateProblem::new(Observation::FullState { metric: Metric::L2 }, ObsValue::State(target.scaled(3.0)), 2);
    let rep3 = deviations::minimize_rate_mdp(&m, &noise, &base, &cfg, &problem3).unwrap();
    assert!((rep3.action - 9.0 * rep.action).abs() <= 1e-6 * rep3.action);
}

#[test]
fn mdp_solution_map_is_linear() {
    let (m, noise, cfg, u0) = tiny();
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let blocks = ControlPath::zeros(cfg.t_end, 2, 3);
    let h1 = blocks.from_scaled_vec(&[1.0, 0.2, -0.7, 0.5, 0.0, 0.3]);
    let h2 = blocks.from_scaled_vec(&[-0.3, 0.9, 0.1, 1.5, -0.4, 0.2]);
    let r1 = dynamics::mdp_endpoint(&m, &base, &noise, &h1, &cfg).unwrap();
    let r2 = dynamics::mdp_endpoint(&m, &base, &noise, &h2, &cfg).unwrap();
    let r12 = dynamics::mdp_endpoint(&m, &base, &noise, &h1.axpy(1.0, &h2), &cfg).unwrap();
    let ra = dynamics::mdp_endpoint(&m, &base, &noise, &h1.scaled(2.5), &cfg).unwrap();
    let g = &m.grid;
    let scale = r12.norm2(g).sqrt();
    assert!((&r12 - &(&r1 + &r2)).norm2(g).sqrt() <= 1e-10 * scale);
    assert!((&ra - &r1.scaled(2.5)).norm2(g).sqrt() <= 1e-10 * ra.norm2(g).sqrt());
    let zero = dynamics::mdp_endpoint(&m, &base, &noise, &blocks, &cfg).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
}

fn linear_setup() -> (Model, NoiseModel, IntegratorConfig, State) {
    let (m, _, cfg, u0) = tiny();
    let m = m.without_advection();
    let mode = ShippedMode { kx: 1, ky: 0, kz: 1, phase: 0.2, angle: 0.4, a_v: 0.6, a_t: 0.9, b: 0.0, c: 0.0, grad_dir: 0 };
    let mode2 = ShippedMode { kx: 0, ky: 1, kz: 0, phase: 1.1, angle: 2.0, a_v: 0.4, a_t: -0.3, b: 0.0, c: 0.0, grad_dir: 1 };
    let noise = NoiseModel::new(&m, NoiseFamily::Shipped { modes: vec![mode, mode2] }, None).unwrap();
    (m, noise, cfg, u0)
}

#[test]
fn ldp_reduces_to_mdp_for_linear_dynamics() {
    let (m, noise, cfg, u0) = linear_setup();
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let blocks = ControlPath::zeros(cfg.t_end, 1, 2);
    let h_ref = blocks.from_scaled_vec(&[0.5, -0.2]);
    let r_ref = dynamics::mdp_endpoint(&m, &base, &noise, &h_ref, &cfg).unwrap();
    let obs = Observation::FullState { metric: Metric::V };
    let mdp = deviations::minimize_rate_mdp(&m, &noise, &base, &cfg, &RateProblem::new(obs.clone(), ObsValue::State(r_ref.clone()), 1)).unwrap();
    let target = base.final_state() + &r_ref;
    let ldp = deviations::minimize_rate_ldp(&m, &noise, &u0, &Forcing::none(), &cfg, &RateProblem::new(obs, ObsValue::State(target), 1)).unwrap();
    assert!(mdp.converged && ldp.converged, "{mdp:?} {ldp:?}");
    assert!(ldp.upper_bound);
    assert!((ldp.action - mdp.action).abs() <= 1e-8 * mdp.action, "{} vs {}", ldp.action, mdp.action);
}

#[test]
fn ldp_gradient_agrees_with_finite_differences() {
    let (m, noise, cfg, u0) = tiny();
    let target = u0.scaled(0.5);
    let problem = RateProblem::new(Observation::FullState { metric: Metric::V }, ObsValue::State(target), 2);
    let h = ControlPath::zeros(cfg.t_end, 2, 3).from_scaled_vec(&[0.3, -0.4, 0.8, 0.1, 0.5, -0.2]);
    let errs = deviations::ldp_gradient_check(&m, &noise, &u0, &Forcing::none(), &cfg, &problem, &h, 10, 1e-5, 7).unwrap();
    assert!(errs.iter().all(|e| *e <= 1e-4), "{errs:?}");
}

#[test]
fn ldp_at_deterministic_endpoint_is_free() {
    let (m, noise, cfg, u0) = tiny();
    let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
    let problem = RateProblem::new(Observation::FullState { metric: Metric::V }, ObsValue::State(base.final_state().clone()), 2);
    let rep = deviations::minimize_rate_ldp(&m, &noise, &u0, &Forcing::none(), &cfg, &problem).unwrap();
    assert_eq!(rep.action, 0.0);
    assert!(rep.converged);
}
