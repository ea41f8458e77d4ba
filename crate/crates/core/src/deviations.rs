//! Rate functionals by minimum-action optimization, Monte Carlo scaling of
//! rare-event probabilities and the central-limit convergence study.
//!
//! Controls are optimized in the scaled coordinates `x = sqrt(dt_i) h_i` in
//! which the action is `|x|^2 / 2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calc;
use crate::dynamics::{self, IntegratorConfig, LambdaRule, Trajectory};
use crate::error::CoreError;
use crate::exec::{self, Execution};
use crate::field::{Components, State};
use crate::noise::{ControlPath, NoiseModel, WienerStream};
use crate::operators::{Forcing, Model};
use crate::stats;

/// Metric on full-state endpoint residuals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L2,
    /// Full `H^1` norm.
    #[default]
    V,
}

/// What part of the endpoint state is constrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    FullState { metric: Metric },
    /// The scalar `<psi, U>`.
    Functional { psi: State },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObsValue {
    Scalar(f64),
    State(State),
}

impl ObsValue {
    fn axpy(&mut self, a: f64, other: &ObsValue) {
        match (self, other) {
            (ObsValue::Scalar(x), ObsValue::Scalar(y)) => *x += a * y,
            (ObsValue::State(x), ObsValue::State(y)) => x.axpy(a, y),
            _ => panic!("mismatched observation kinds"),
        }
    }

    fn scaled(&self, a: f64) -> ObsValue {
        match self {
            ObsValue::Scalar(x) => ObsValue::Scalar(a * x),
            ObsValue::State(x) => ObsValue::State(x.scaled(a)),
        }
    }
}

impl Observation {
    pub fn observe(&self, u: &State) -> ObsValue {
        match self {
            Observation::FullState { .. } => ObsValue::State(u.clone()),
            Observation::Functional { psi } => ObsValue::Scalar(psi.components().iter().zip(u.components()).map(|(a, b)| dot_plain(a, b)).sum()),
        }
    }

    fn weight(&self, model: &Model, r: &ObsValue) -> ObsValue {
        match (self, r) {
            (Observation::FullState { metric: Metric::L2 }, ObsValue::State(_)) => r.clone(),
            (Observation::FullState { metric: Metric::V }, ObsValue::State(s)) => {
                let g = &model.grid;
                ObsValue::State(s.map(|c| {
                    let lap = calc::lap_h(g, c);
                    let zz = calc::neg_dzz(g, c, 0.0);
                    (0..c.len()).map(|i| c[i] - lap[i] + zz[i]).collect()
                }))
            }
            (Observation::Functional { .. }, ObsValue::Scalar(_)) => r.clone(),
            _ => panic!("observation kind does not match value"),
        }
    }

    /// `<r, s>_W`.
    pub fn inner(&self, model: &Model, r: &ObsValue, s: &ObsValue) -> f64 {
        match (self.weight(model, r), s) {
            (ObsValue::Scalar(a), ObsValue::Scalar(b)) => a * b,
            (ObsValue::State(a), ObsValue::State(b)) => a.dot(&model.grid, b),
            _ => panic!("observation kind does not match value"),
        }
    }

    pub fn norm(&self, model: &Model, r: &ObsValue) -> f64 {
        self.inner(model, r, r).max(0.0).sqrt()
    }

    /// `O^* W r` as a state-space seed for the adjoint.
    fn adjoint_seed(&self, model: &Model, r: &ObsValue) -> State {
        match (self, self.weight(model, r)) {
            (Observation::Functional { psi }, ObsValue::Scalar(a)) => quadrature_dual(model, psi).scaled(a),
            (_, ObsValue::State(s)) => s,
            _ => panic!("observation kind does not match value"),
        }
    }

    fn check(&self, model: &Model, target: &ObsValue) -> Result<(), CoreError> {
        match (self, target) {
            (Observation::FullState { .. }, ObsValue::State(s)) => Ok(s.check_shape(&model.grid)?),
            (Observation::Functional { psi }, ObsValue::Scalar(_)) => Ok(psi.check_shape(&model.grid)?),
            _ => Err(CoreError::InvalidInput("target kind does not match the observation".into())),
        }
    }
}

fn dot_plain(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The functional `<psi, U>` is a plain grid sum; its Riesz representer in the
/// quadrature inner product divides by the weights.
fn quadrature_dual(model: &Model, psi: &State) -> State {
    let g = &model.grid;
    let nxy = g.nxy();
    let w = g.weights();
    let area = g.cell_area();
    psi.map(|c| c.iter().enumerate().map(|(i, x)| x / (w[i / nxy] * area)).collect())
}

/// `psi` such that `<psi, U>` (plain grid sum) equals the quadrature product `(phi, U) / (phi, phi)`:
/// the coefficient of `U` along `phi`.
pub fn coefficient_functional(model: &Model, phi: &State) -> State {
    let g = &model.grid;
    let nxy = g.nxy();
    let w = g.weights();
    let area = g.cell_area();
    let n2 = phi.norm2(g);
    phi.map(|c| c.iter().enumerate().map(|(i, x)| x * w[i / nxy] * area / n2).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    Ldp,
    Mdp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProblem {
    pub observation: Observation,
    /// Target of `U_h(t)` (LDP) or of `R_h(t)` (MDP).
    pub target: ObsValue,
    /// Number of equal control blocks on `[0, t]`.
    pub n_blocks: usize,
    /// Relative endpoint tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty weight of the endpoint constraint (LDP).
    pub rho: f64,
    pub max_outer: usize,
    /// Step halvings allowed before a line search gives up (LDP).
    pub line_search_retries: usize,
}

impl RateProblem {
    pub fn new(observation: Observation, target: ObsValue, n_blocks: usize) -> Self {
        Self { observation, target, n_blocks, tol: 1e-10, max_iter: 500, rho: 10.0, max_outer: 40, line_search_retries: 30 }
    }

    fn validate(&self, model: &Model) -> Result<(), CoreError> {
        if self.n_blocks == 0 {
            return Err(CoreError::InvalidInput("n_blocks must be positive".into()));
        }
        if !(self.rho > 0.0) || !(self.tol > 0.0) {
            return Err(CoreError::InvalidInput("rho and tol must be positive".into()));
        }
        self.observation.check(model, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub mode: RateMode,
    pub h_star: ControlPath,
    pub action: f64,
    /// `|O(X_h(t)) - target|_W`.
    pub endpoint_residual: f64,
    /// Residual relative to the target's distance from the uncontrolled endpoint.
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True for the nonlinear problem: the action is only an upper bound on the rate.
    pub upper_bound: bool,
    /// Optimizer objective after every iteration.
    pub objective_history: Vec<f64>,
    pub action_history: Vec<f64>,
}

/// `1/2 int |h|^2`.
pub fn action(h: &ControlPath) -> f64 {
    h.action()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy_vec(y: &mut [f64], a: f64, x: &[f64]) {
    for (u, v) in y.iter_mut().zip(x) {
        *u += a * v;
    }
}

/// Gradient with respect to `h` converted to the scaled coordinates.
fn to_scaled_gradient(grad: &ControlPath) -> Vec<f64> {
    let mut out = Vec::with_capacity(grad.n_blocks() * grad.m());
    for (i, c) in grad.coeffs.iter().enumerate() {
        let s = 1.0 / grad.block_len(i).sqrt();
        out.extend(c.iter().map(|x| s * x));
    }
    out
}

/// Linear solution map `x -> O(R_{h(x)}(t))` and its `W`-adjoint.
struct MdpMap<'a> {
    model: &'a Model,
    noise: &'a NoiseModel,
    base: &'a Trajectory,
    cfg: &'a IntegratorConfig,
    obs: &'a Observation,
    blocks: ControlPath,
}

impl MdpMap<'_> {
    fn apply(&self, x: &[f64]) -> Result<ObsValue, CoreError> {
        let h = self.blocks.from_scaled_vec(x);
        let r = dynamics::mdp_endpoint(self.model, self.base, self.noise, &h, self.cfg)?;
        Ok(self.obs.observe(&r))
    }

    fn adjoint(&self, r: &ObsValue) -> Result<Vec<f64>, CoreError> {
        let seed = self.obs.adjoint_seed(self.model, r);
        let g = dynamics::mdp_endpoint_adjoint(self.model, self.base, self.noise, &seed, &self.blocks, self.cfg)?;
        Ok(to_scaled_gradient(&g))
    }
}

/// Minimum action for the linear skeleton by CGLS on the normal equations.
/// The iterates have nondecreasing norm and the returned control is the
/// least-norm preimage when the target is reachable.
pub fn minimize_rate_mdp(
    model: &Model,
    noise: &NoiseModel,
    base: &Trajectory,
    cfg: &IntegratorConfig,
    problem: &RateProblem,
) -> Result<RateReport, CoreError> {
    problem.validate(model)?;
    cfg.validate()?;
    let blocks = ControlPath::zeros(cfg.t_end, problem.n_blocks, noise.m());
    let map = MdpMap { model, noise, base, cfg, obs: &problem.observation, blocks: blocks.clone() };
    let obs = &problem.observation;
    let b = problem.target.clone();
    let b_norm = obs.norm(model, &b);
    let n = blocks.n_blocks() * blocks.m();
    let mut x = vec![0.0; n];
    let mut report = RateReport {
        mode: RateMode::Mdp,
        h_star: blocks.clone(),
        action: 0.0,
        endpoint_residual: b_norm,
        relative_residual: if b_norm > 0.0 { 1.0 } else { 0.0 },
        iterations: 0,
        converged: b_norm == 0.0,
        upper_bound: false,
        objective_history: vec![0.5 * b_norm * b_norm],
        action_history: vec![0.0],
    };
    if b_norm == 0.0 || n == 0 {
        return Ok(report);
    }
    let mut r = b.clone();
    let mut s = map.adjoint(&r)?;
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let gamma0 = gamma;
    for it in 1..=problem.max_iter {
        if gamma <= 1e-30 * gamma0.max(1e-300) {
            break;
        }
        let q = map.apply(&p)?;
        let qq = obs.inner(model, &q, &q);
        if qq <= 0.0 {
            break;
        }
        let alpha = gamma / qq;
        axpy_vec(&mut x, alpha, &p);
        r.axpy(-alpha, &q);
        let res = obs.norm(model, &r);
        report.iterations = it;
        report.objective_history.push(0.5 * res * res);
        report.action_history.push(0.5 * dot(&x, &x));
        if res <= problem.tol * b_norm {
            report.converged = true;
            break;
        }
        s = map.adjoint(&r)?;
        let gamma_new = dot(&s, &s);
        if gamma_new <= 1e-24 * gamma0 {
            // normal equations solved but the residual stays: unreachable target
            break;
        }
        let beta = gamma_new / gamma;
        gamma = gamma_new;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
    }
    // recompute the residual from scratch to avoid recurrence drift
    let end = map.apply(&x)?;
    let mut rr = b;
    rr.axpy(-1.0, &end);
    let res = obs.norm(model, &rr);
    report.endpoint_residual = res;
    report.relative_residual = res / b_norm;
    // allow for drift between the recurrence and the recomputed residual
    report.converged = report.relative_residual <= 10.0 * problem.tol.max(1e-12);
    report.h_star = blocks.from_scaled_vec(&x);
    report.action = 0.5 * dot(&x, &x);
    Ok(report)
}

/// Nonlinear controlled map `x -> O(U_{h(x)}(t))` with adjoint gradients.
struct LdpMap<'a> {
    model: &'a Model,
    noise: &'a NoiseModel,
    u0: &'a State,
    forcing: &'a Forcing,
    cfg: &'a IntegratorConfig,
    obs: &'a Observation,
    blocks: ControlPath,
}

impl LdpMap<'_> {
    /// Augmented Lagrangian `|x|^2/2 + <mu, c>_W + rho/2 |c|_W^2`, `c = O(U_h(t)) - target`,
    /// with its gradient.
    fn eval(&self, x: &[f64], target: &ObsValue, mu: &ObsValue, rho: f64, with_grad: bool) -> Result<(f64, ObsValue, Option<Vec<f64>>), CoreError> {
        let h = self.blocks.from_scaled_vec(x);
        let fwd = dynamics::ldp_forward(self.model, self.u0, self.forcing, self.noise, &h, self.cfg)?;
        let mut c = self.obs.observe(fwd.final_state());
        c.axpy(-1.0, target);
        let f = 0.5 * dot(x, x) + self.obs.inner(self.model, mu, &c) + 0.5 * rho * self.obs.inner(self.model, &c, &c);
        if !with_grad {
            return Ok((f, c, None));
        }
        let mut m = mu.clone();
        m.axpy(rho, &c);
        let seed = self.obs.adjoint_seed(self.model, &m);
        let g = dynamics::ldp_adjoint(self.model, self.noise, &h, &fwd, &seed)?;
        let mut grad = to_scaled_gradient(&g);
        axpy_vec(&mut grad, 1.0, x);
        Ok((f, c, Some(grad)))
    }
}

/// Minimum action for the nonlinear skeleton: augmented Lagrangian outer loop,
/// Polak-Ribiere conjugate gradients inside. The returned action is an upper
/// bound on the rate (the landscape is not convex in general).
pub fn minimize_rate_ldp(
    model: &Model,
    noise: &NoiseModel,
    u0: &State,
    forcing: &Forcing,
    cfg: &IntegratorConfig,
    problem: &RateProblem,
) -> Result<RateReport, CoreError> {
    problem.validate(model)?;
    cfg.validate()?;
    let blocks = ControlPath::zeros(cfg.t_end, problem.n_blocks, noise.m());
    let map = LdpMap { model, noise, u0, forcing, cfg, obs: &problem.observation, blocks: blocks.clone() };
    let obs = &problem.observation;
    let target = &problem.target;
    let n = blocks.n_blocks() * blocks.m();
    let mut x = vec![0.0; n];
    let zero_mu = target.scaled(0.0);
    let (_, c0, _) = map.eval(&x, target, &zero_mu, 0.0, false)?;
    let scale = obs.norm(model, &c0);
    let mut report = RateReport {
        mode: RateMode::Ldp,
        h_star: blocks.clone(),
        action: 0.0,
        endpoint_residual: scale,
        relative_residual: if scale > 0.0 { 1.0 } else { 0.0 },
        iterations: 0,
        converged: scale == 0.0,
        upper_bound: true,
        objective_history: Vec::new(),
        action_history: vec![0.0],
    };
    if scale == 0.0 || n == 0 {
        return Ok(report);
    }
    // scale the penalty so that rho |c|^2 is comparable to the action at the start
    let mut rho = problem.rho / (scale * scale);
    let mut mu = zero_mu;
    let mut last_c = f64::INFINITY;
    let mut total_iter = 0;
    for _outer in 0..problem.max_outer {
        let (inner_iters, c) = ncg(&map, &mut x, target, &mu, rho, problem, &mut report.objective_history)?;
        total_iter += inner_iters;
        report.action_history.push(0.5 * dot(&x, &x));
        let c_norm = obs.norm(model, &c);
        report.endpoint_residual = c_norm;
        report.relative_residual = c_norm / scale;
        if report.relative_residual <= problem.tol {
            report.converged = true;
            break;
        }
        mu.axpy(rho, &c);
        if c_norm > 0.25 * last_c {
            rho *= 10.0;
        }
        last_c = c_norm;
    }
    report.iterations = total_iter;
    report.h_star = blocks.from_scaled_vec(&x);
    report.action = 0.5 * dot(&x, &x);
    Ok(report)
}

/// Inner minimization of the augmented Lagrangian; returns iterations and the final constraint value.
fn ncg(
    map: &LdpMap<'_>,
    x: &mut Vec<f64>,
    target: &ObsValue,
    mu: &ObsValue,
    rho: f64,
    problem: &RateProblem,
    history: &mut Vec<f64>,
) -> Result<(usize, ObsValue), CoreError> {
    let (mut f, mut c, g) = map.eval(x, target, mu, rho, true)?;
    let mut g = g.expect("gradient requested");
    let g0 = dot(&g, &g).sqrt().max(1e-300);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut alpha0 = 1.0 / (1.0 + rho.sqrt());
    history.push(f);
    for it in 1..=problem.max_iter {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= 1e-13 * g0.max(1.0) || gnorm == 0.0 {
            return Ok((it - 1, c));
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // quadratic fit from (0, f, slope) and one trial point, then Armijo with halving
        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha0 * b).collect();
        let ft = match map.eval(&trial, target, mu, rho, false) {
            Ok((ft, _, _)) => ft,
            Err(CoreError::BlowUp(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let curv = ft - f - slope * alpha0;
        let mut alpha = if !curv.is_finite() {
            0.5 * alpha0
        } else if curv > 0.0 {
            -slope * alpha0 * alpha0 / (2.0 * curv)
        } else {
            2.0 * alpha0
        };
        let mut accepted = None;
        for _ in 0..=problem.line_search_retries {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            let (fc, cc, gc) = match map.eval(&cand, target, mu, rho, true) {
                Ok(v) => v,
                // a step that blows the model up is simply too long
                Err(CoreError::BlowUp(_)) => {
                    alpha *= 0.5;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if fc <= f + 1e-4 * alpha * slope {
                accepted = Some((cand, fc, cc, gc.expect("gradient requested")));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, cn, gn)) = accepted else {
            // no descent along d: stationary to working precision
            return Ok((it - 1, c));
        };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let beta = (dot(&gn, &y) / dot(&g, &g)).max(0.0);
        d = gn.iter().zip(&d).map(|(a, b)| -a + beta * b).collect();
        let df = f - fnew;
        *x = xn;
        f = fnew;
        c = cn;
        g = gn;
        alpha0 = alpha.max(1e-12);
        history.push(f);
        if df.abs() <= 1e-16 * f.abs() && dot(&g, &g).sqrt() <= 1e-10 * g0 {
            return Ok((it, c));
        }
    }
    Ok((problem.max_iter, c))
}

/// Relative errors between adjoint and central-difference directional
/// derivatives of the LDP objective at `h`, along `n_dirs` random directions.
#[allow(clippy::too_many_arguments)]
pub fn ldp_gradient_check(
    model: &Model,
    noise: &NoiseModel,
    u0: &State,
    forcing: &Forcing,
    cfg: &IntegratorConfig,
    problem: &RateProblem,
    h: &ControlPath,
    n_dirs: usize,
    step: f64,
    seed: u64,
) -> Result<Vec<f64>, CoreError> {
    problem.validate(model)?;
    let map = LdpMap { model, noise, u0, forcing, cfg, obs: &problem.observation, blocks: h.scaled(0.0) };
    let x = h.to_scaled_vec();
    let mu = problem.target.scaled(0.0);
    let rho = problem.rho;
    let (_, _, g) = map.eval(&x, &problem.target, &mu, rho, true)?;
    let g = g.expect("gradient requested");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_dirs);
    for _ in 0..n_dirs {
        let d: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
        let xm: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a - step * b).collect();
        let fp = map.eval(&xp, &problem.target, &mu, rho, false)?.0;
        let fm = map.eval(&xm, &problem.target, &mu, rho, false)?.0;
        let fd = (fp - fm) / (2.0 * step);
        let ad = dot(&g, &d);
        out.push((fd - ad).abs() / ad.abs().max(fd.abs()).max(1e-300));
    }
    Ok(out)
}

// ---- Monte Carlo scaling ----------------------------------------------------

/// Rare event on the endpoint state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Whole,
    /// `||U(t) - center|| <= radius` in the `V` norm.
    EndpointBall { center: State, radius: f64 },
    /// `<psi, U(t)> >= threshold` (plain grid sum).
    ModeThreshold { psi: State, threshold: f64 },
}

impl Event {
    pub fn contains(&self, model: &Model, u: &State) -> bool {
        match self {
            Event::Whole => true,
            Event::EndpointBall { center, radius } => dynamics::v_norm2(model, &(u - center)).sqrt() <= *radius,
            Event::ModeThreshold { psi, threshold } => {
                psi.components().iter().zip(u.components()).map(|(a, b)| dot_plain(a, b)).sum::<f64>() >= *threshold
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub n: u64,
    pub hits: u64,
    pub p_hat: f64,
    /// `eps log p_hat`, or `eps log` of the upper Wilson bound when there are no hits.
    pub eps_log_p: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `-I_upper` from the rate solver (NaN when not supplied).
    pub i_upper: f64,
    /// Set when no hits were observed; only `ci_hi` is then meaningful.
    pub one_sided: bool,
    pub blowups: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// True when `eps log p_hat` moves monotonically towards `-I` as `eps` decreases.
    pub monotone_trend: bool,
}

impl ScalingTable {
    pub const CSV_HEADER: &'static str = "eps,n,hits,p_hat,eps_log_p,ci_lo,ci_hi,i_upper";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{},{},{:e},{:e},{:e},{:e},{:e}\n",
                r.eps, r.n, r.hits, r.p_hat, r.eps_log_p, r.ci_lo, r.ci_hi, r.i_upper
            ));
        }
        s
    }
}

/// Estimates `eps log P(event)` for each `eps`. `sample(eps, path)` returns
/// whether path `path` hit the event; paths share stream ids across `eps`
/// (common random numbers). Blown-up paths count as misses.
pub fn mc_ldp_scaling<F>(eps_list: &[f64], n_paths: u64, minus_i: Option<f64>, confidence: f64, exec: Execution, sample: F) -> Result<ScalingTable, CoreError>
where
    F: Fn(f64, u64) -> Result<bool, CoreError> + Sync + Send,
{
    if eps_list.is_empty() || n_paths == 0 {
        return Err(CoreError::InvalidInput("need at least one eps and one path".into()));
    }
    if eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(CoreError::InvalidInput("eps values must be positive".into()));
    }
    let z = stats::two_sided_z(confidence);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let outcomes = exec::map_range(exec, n_paths as usize, |p| match sample(eps, p as u64) {
            Ok(hit) => Ok((hit, false)),
            Err(CoreError::BlowUp(_)) => Ok((false, true)),
            Err(e) => Err(e),
        });
        let mut hits = 0u64;
        let mut blowups = 0u64;
        for o in outcomes {
            let (hit, blew) = o?;
            hits += hit as u64;
            blowups += blew as u64;
        }
        let p_hat = hits as f64 / n_paths as f64;
        let (lo, hi) = stats::wilson(hits, n_paths, z);
        let one_sided = hits == 0;
        rows.push(ScalingRow {
            eps,
            n: n_paths,
            hits,
            p_hat,
            eps_log_p: if one_sided { eps * hi.ln() } else { eps * p_hat.ln() },
            ci_lo: eps * lo.ln(),
            ci_hi: eps * hi.ln(),
            i_upper: minus_i.unwrap_or(f64::NAN),
            one_sided,
            blowups,
        });
    }
    let monotone_trend = match minus_i {
        Some(mi) => rows.windows(2).all(|w| (w[1].eps_log_p - mi).abs() <= (w[0].eps_log_p - mi).abs() || w[1].eps >= w[0].eps),
        None => true,
    };
    Ok(ScalingTable { rows, monotone_trend })
}

/// Exact scalar reduction of the scheme for a single decaying mode with
/// additive forcing: `c_{n+1} = s (c_n + sqrt(eps) amp dW_n)`, `s = 1/(1 + dt kappa)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarOu {
    pub kappa: f64,
    pub amp: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub x0: f64,
}

impl ScalarOu {
    fn s(&self) -> f64 {
        1.0 / (1.0 + self.dt * self.kappa)
    }

    /// Endpoint driven by `stream` (component 0 of each increment).
    pub fn endpoint(&self, eps: f64, stream: &WienerStream) -> Result<f64, CoreError> {
        let s = self.s();
        let a = eps.sqrt() * self.amp;
        let mut c = self.x0;
        for n in 0..self.n_steps {
            let dw = stream.increment(n as u64, self.dt)?[0];
            c = s * (c + a * dw);
        }
        Ok(c)
    }

    /// Mean and variance of the discrete endpoint.
    pub fn endpoint_law(&self, eps: f64) -> (f64, f64) {
        let s = self.s();
        let mean = self.x0 * s.powi(self.n_steps as i32);
        let var: f64 = (1..=self.n_steps).map(|j| s.powi(2 * j as i32)).sum::<f64>() * eps * self.amp * self.amp * self.dt;
        (mean, var)
    }

    /// Continuous-time law `(x0 e^{-kt}, eps amp^2 (1 - e^{-2kt}) / (2k))`.
    pub fn continuous_law(&self, eps: f64) -> (f64, f64) {
        let t = self.dt * self.n_steps as f64;
        let mean = self.x0 * (-self.kappa * t).exp();
        let var = eps * self.amp * self.amp * (1.0 - (-2.0 * self.kappa * t).exp()) / (2.0 * self.kappa);
        (mean, var)
    }

    /// `eps log P(c_N >= threshold)` for the discrete endpoint.
    pub fn exact_eps_log_p(&self, eps: f64, threshold: f64) -> f64 {
        let (m, v) = self.endpoint_law(eps);
        eps * stats::log_normal_sf((threshold - m) / v.sqrt())
    }

    /// Rate `I = (threshold - mean)^2 / (2 v1)` with `v1` the unit-eps variance.
    pub fn rate(&self, threshold: f64) -> f64 {
        let (m, v1) = self.endpoint_law(1.0);
        let d = (threshold - m).max(0.0);
        d * d / (2.0 * v1)
    }
}

// ---- central limit study ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRow {
    pub eps: f64,
    pub n_ok: usize,
    pub n_blowup: usize,
    /// Median over paths of `sup_n ||R^eps_n - Y_n||`.
    pub median_sup_v: f64,
    /// Median over paths of `sup ||.|| + (sum dt |A(R^eps - Y)|^2)^{1/2}`.
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub rows: Vec<CltRow>,
    /// Log-log slope of `median_sup_v` against `eps`.
    pub slope_sup_v: f64,
    pub slope_error: f64,
}

/// Pathwise distance between `(U^eps - U0)/sqrt(eps)` and the limit `Y` driven by
/// the same increments, for each `eps` and `n_paths` streams.
#[allow(clippy::too_many_arguments)]
pub fn clt_rate_study(
    model: &Model,
    u0: &State,
    forcing: &Forcing,
    noise: &NoiseModel,
    cfg: &IntegratorConfig,
    eps_list: &[f64],
    n_paths: usize,
    seed: u64,
    exec: Execution,
) -> Result<CltReport, CoreError> {
    let mut c = *cfg;
    c.store_every = 1;
    c.lambda_rule = LambdaRule::Constant { value: 1.0 };
    c.diagnostics = dynamics::DiagLevel::Energy;
    let base = dynamics::solve_deterministic(model, u0, forcing, &c)?;
    let mut rows = Vec::new();
    for &eps in eps_list {
        let mut ce = c;
        ce.eps = eps;
        let errs = exec::map_range(exec, n_paths, |p| -> Result<Option<(f64, f64)>, CoreError> {
            let stream = WienerStream::new(seed, p as u64, noise.m());
            let ue = match dynamics::solve_stochastic(model, u0, forcing, noise, stream, &ce) {
                Ok(t) => t,
                Err(CoreError::BlowUp(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let y = match dynamics::solve_clt_limit(model, &base, noise, stream, &ce) {
                Ok(t) => t,
                Err(CoreError::BlowUp(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            dynamics::ensure_coupled(&ue, &y)?;
            let r = dynamics::deviation_from_pair(model, &ue, &base, &ce)?;
            let mut sup: f64 = 0.0;
            let mut int = 0.0;
            for (a, b) in r.states.iter().zip(&y.states) {
                let d = a - b;
                sup = sup.max(dynamics::v_norm2(model, &d).sqrt());
                int += ce.dt * model.apply_a(&d).norm2(&model.grid);
            }
            Ok(Some((sup, sup + int.sqrt())))
        });
        let mut sups = Vec::new();
        let mut totals = Vec::new();
        let mut n_blowup = 0;
        for e in errs {
            match e? {
                Some((s, t)) => {
                    sups.push(s);
                    totals.push(t);
                }
                None => n_blowup += 1,
            }
        }
        rows.push(CltRow {
            eps,
            n_ok: sups.len(),
            n_blowup,
            median_sup_v: stats::median(&sups).unwrap_or(f64::NAN),
            median_error: stats::median(&totals).unwrap_or(f64::NAN),
        });
    }
    let slope = |f: &dyn Fn(&CltRow) -> f64| -> f64 {
        let xs: Vec<f64> = rows.iter().map(|r| r.eps.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| f(r).ln()).collect();
        stats::linear_fit(&xs, &ys).map(|p| p.0).unwrap_or(f64::NAN)
    };
    let slope_sup_v = slope(&|r| r.median_sup_v);
    let slope_error = slope(&|r| r.median_error);
    Ok(CltReport { rows, slope_sup_v, slope_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample;
    use crate::grid::{Domain, Grid};
    use crate::operators::PhysicalParams;
    use std::f64::consts::PI;

    #[test]
    fn whole_space_has_probability_one() {
        let t = mc_ldp_scaling(&[0.1, 0.05], 50, None, 0.95, Execution::Sequential, |_, _| Ok(true)).unwrap();
        for r in &t.rows {
            assert_eq!(r.p_hat, 1.0);
            assert_eq!(r.eps_log_p, 0.0);
        }
        assert!(t.to_csv().starts_with(ScalingTable::CSV_HEADER));
    }

    #[test]
    fn scalar_ou_law_matches_recursion_limit() {
        let ou = ScalarOu { kappa: 2.0, amp: 1.0, dt: 1e-4, n_steps: 10000, x0: 1.0 };
        let (m, v) = ou.endpoint_law(0.1);
        let (mc, vc) = ou.continuous_law(0.1);
        assert!((m - mc).abs() < 1e-3 * mc);
        assert!((v - vc).abs() < 1e-3 * vc);
        assert!(ou.rate(m) == 0.0);
    }

    #[test]
    fn mdp_zero_target_needs_no_control() {
        let g = Grid::new(Domain::new(2.0 * PI, 1.0, 4, 4, 3).unwrap()).unwrap();
        let m = Model::new(g, PhysicalParams::default()).unwrap();
        let noise = NoiseModel::shipped_default(&m);
        let cfg = IntegratorConfig { dt: 0.05, t_end: 0.2, ..Default::default() };
        let u0 = m.project(&State { v: [sample(&m.grid, |x, _, _| x.sin()), vec![0.0; m.grid.len()]], t: vec![0.0; m.grid.len()] });
        let base = dynamics::solve_deterministic(&m, &u0, &Forcing::none(), &cfg).unwrap();
        let p = RateProblem::new(Observation::FullState { metric: Metric::V }, ObsValue::State(State::zeros(&m.grid)), 4);
        let r = minimize_rate_mdp(&m, &noise, &base, &cfg, &p).unwrap();
        assert_eq!(r.action, 0.0);
        assert!(r.converged);
    }
}
