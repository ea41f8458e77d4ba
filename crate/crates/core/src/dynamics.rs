//! Semi-implicit Euler(-Maruyama) integration of the deterministic,
//! stochastic, skeleton, linearized and deviation equations, and discrete
//! adjoints of the controlled solution maps.
//!
//! One step of every equation reads
//!
//! ```text
//! y       = X_n + dt * drift_n(X_n) + noise_n(X_n)
//! X_{n+1} = S P R(y),        S = (I + dt A)^{-1}
//! ```
//!
//! where `R` is the exact Coriolis rotation over `dt` and `P` the projection
//! onto the discrete state space. Only `A` is implicit.

use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::{BlowUpInfo, CoreError};
use crate::field::{Components, State};
use crate::noise::{ControlPath, NoiseModel, WienerStream};
use crate::norms;
use crate::operators::{Forcing, Model};

/// How `lambda(eps)` is chosen for the deviation scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    /// `lambda = eps^(-exponent)`; the moderate regime needs `0 < exponent < 1/2`.
    Power { exponent: f64 },
    Constant { value: f64 },
    /// `lambda = eps^(-1/2)`.
    Ldp,
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Power { exponent: 0.25 }
    }
}

impl LambdaRule {
    pub fn lambda(&self, eps: f64) -> f64 {
        match *self {
            LambdaRule::Power { exponent } => eps.powf(-exponent),
            LambdaRule::Constant { value } => value,
            LambdaRule::Ldp => 1.0 / eps.sqrt(),
        }
    }

    /// True when `lambda -> inf` and `sqrt(eps) lambda -> 0`.
    pub fn is_moderate(&self) -> bool {
        matches!(*self, LambdaRule::Power { exponent } if exponent > 0.0 && exponent < 0.5)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagLevel {
    /// Energy, `V` and `D(A)` norms and the constraint residual at stored steps.
    #[default]
    Energy,
    /// Additionally accumulate every stopping-time functional at each step.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub eps: f64,
    pub lambda_rule: LambdaRule,
    /// Keep every `store_every`-th state (the last one is always kept).
    pub store_every: usize,
    pub blowup_threshold: f64,
    pub diagnostics: DiagLevel,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_end: 1.0,
            eps: 1e-2,
            lambda_rule: LambdaRule::default(),
            store_every: 1,
            blowup_threshold: 1e8,
            diagnostics: DiagLevel::Energy,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CoreError::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(CoreError::InvalidInput(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(CoreError::InvalidInput(format!("eps must be nonnegative, got {}", self.eps)));
        }
        if self.store_every == 0 {
            return Err(CoreError::InvalidInput("store_every must be at least 1".into()));
        }
        let n = self.t_end / self.dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(CoreError::InvalidInput(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt)));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_rule.lambda(self.eps)
    }
}

/// Running values of the stopping-time functionals. Each entry is
/// `sup_{[0,s]} (sup part) + int_0^s (integral part)` and hence nondecreasing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StoppingFunctionals {
    /// `int |X|^4 + ||X||^2 + |X|^4 ||X||^2`.
    pub w: f64,
    /// `int |vt|_6^6 + int |vt|^4 |grad3 vt|^2` for the baroclinic velocity.
    pub six: f64,
    /// `int ||vbar||_{H^1(M0)}^4`.
    pub grad: f64,
    /// `int |dz v|^2 ||dz v||^2`.
    pub z: f64,
    /// `sup |dz T|^4 + int |dz T|^2 ||dz T||^2`.
    pub t: f64,
    /// `sup ||X||^2 + int ||X||_{H^2}^2` (p = 2).
    pub r: f64,
    /// `sup ||X|| + sup |X|_inf + sup ||dz X|| + int ||X||_{H^2}^2 + ||dz X||_{H^2}^2`.
    pub zero: f64,
    /// `int |AX|^2` (p = 2).
    pub u: f64,
}

impl StoppingFunctionals {
    pub fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("tau_w", self.w),
            ("tau_6", self.six),
            ("tau_grad", self.grad),
            ("tau_z", self.z),
            ("tau_t", self.t),
            ("tau_r", self.r),
            ("tau_0", self.zero),
            ("tau_u", self.u),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    /// `|X|^2`.
    pub energy: f64,
    /// `||X||^2` (full `H^1`).
    pub v_norm2: f64,
    /// `|AX|^2`.
    pub a_norm2: f64,
    /// `|div int v dz|`.
    pub constraint: f64,
    /// Present at [`DiagLevel::Full`].
    pub stopping: Option<StoppingFunctionals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub n_steps: usize,
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Wiener stream that drove the run, if any.
    pub stream: Option<WienerStream>,
}

impl Trajectory {
    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("trajectory holds at least the initial state")
    }

    /// Linear interpolation between stored states (clamped to the horizon).
    pub fn state_at(&self, t: f64) -> State {
        let n = self.times.len();
        if t <= self.times[0] || n == 1 {
            return self.states[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.states[n - 1].clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let a = (t - t0) / (t1 - t0);
        if a == 0.0 {
            return self.states[i].clone();
        }
        let mut out = self.states[i].scaled(1.0 - a);
        out.axpy(a, &self.states[i + 1]);
        out
    }

    /// State at step `n` of a run with step `dt` (exact when stored).
    pub fn state_at_step(&self, n: usize, dt: f64) -> State {
        if (self.dt - dt).abs() <= 1e-14 * dt {
            let stride = if self.steps.len() > 1 { self.steps[1] - self.steps[0] } else { 1 };
            if n % stride == 0 {
                if let Ok(i) = self.steps.binary_search(&n) {
                    return self.states[i].clone();
                }
            }
        }
        self.state_at(n as f64 * dt)
    }

    /// `sup_n ||X_n||` over stored states in the full `H^1` norm.
    pub fn sup_v_norm(&self, model: &Model) -> f64 {
        self.states.iter().map(|s| v_norm2(model, s).sqrt()).fold(0.0, f64::max)
    }
}

/// Which equation a run integrates.
enum Equation<'a> {
    /// `dX + [AX + B(X) + F(X)] dt = sqrt(eps) sigma(X) dW + sigma(X) h dt`.
    Full { forcing: &'a Forcing, control: Option<&'a ControlPath>, noise_scale: f64 },
    /// `dX + [AX + B(X, U0) + B(U0, X) + A_pr X + EX] dt = sigma(U0) (h dt + noise_scale dW)`.
    Linearized { base: &'a Trajectory, control: Option<&'a ControlPath>, noise_scale: f64 },
    /// Deviation process with `U^eps = U0 + sqrt(eps) lambda X`.
    Deviation { base: &'a Trajectory, coupling: f64, inv_lambda: f64 },
}

/// `||X||^2` in the full `H^1` norm.
pub fn v_norm2(model: &Model, u: &State) -> f64 {
    u.components().iter().map(|c| norms::h1_sq(&model.grid, c)).sum()
}

fn h2_norm2(model: &Model, u: &State) -> f64 {
    u.components().iter().map(|c| norms::h2_sq(&model.grid, c)).sum()
}

fn dz_state(model: &Model, u: &State) -> State {
    u.map(|c| calc::dz(&model.grid, c))
}

/// Integrands and sup-terms of the stopping functionals at one state.
fn stopping_terms(model: &Model, u: &State) -> ([f64; 8], [f64; 8]) {
    let g = &model.grid;
    let e = u.norm2(g);
    let v2 = v_norm2(model, u);
    let mut sup = [0.0; 8];
    let mut int = [0.0; 8];
    int[0] = e * e + v2 + e * e * v2;
    // baroclinic velocity
    let vt = [calc::remainder(g, &u.v[0]), calc::remainder(g, &u.v[1])];
    let mag2: Vec<f64> = (0..g.len()).map(|i| vt[0][i] * vt[0][i] + vt[1][i] * vt[1][i]).collect();
    let six: Vec<f64> = mag2.iter().map(|m| m * m * m).collect();
    let mut grad3 = vec![0.0; g.len()];
    for c in &vt {
        let [gx, gy] = calc::grad(g, c);
        let gz = calc::dz(g, c);
        for i in 0..g.len() {
            grad3[i] += gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i];
        }
    }
    let weighted: Vec<f64> = mag2.iter().zip(&grad3).map(|(m, d)| m * m * d).collect();
    let ones = vec![1.0; g.len()];
    int[1] = calc::dot3(g, &six, &ones) + calc::dot3(g, &weighted, &ones);
    let mut vbar_h1 = 0.0;
    for c in 0..2 {
        let m = calc::vertical_mean(g, &u.v[c]);
        let [mx, my] = calc::grad(g, &m);
        vbar_h1 += calc::dot2(g, &m, &m) + calc::dot2(g, &mx, &mx) + calc::dot2(g, &my, &my);
    }
    int[2] = vbar_h1 * vbar_h1;
    let dz = dz_state(model, u);
    let dzv = State { v: dz.v.clone(), t: vec![0.0; g.len()] };
    int[3] = dzv.norm2(g) * v_norm2(model, &dzv);
    let dzt = calc::dz(g, &u.t);
    let dzt_l2 = calc::dot3(g, &dzt, &dzt);
    sup[4] = dzt_l2 * dzt_l2;
    int[4] = dzt_l2 * norms::h1_sq(g, &dzt);
    let h2 = h2_norm2(model, u);
    sup[5] = v2;
    int[5] = h2;
    sup[6] = v2.sqrt() + u.max_abs() + v_norm2(model, &dz).sqrt();
    int[6] = h2 + h2_norm2(model, &dz);
    int[7] = model.apply_a(u).norm2(g);
    (sup, int)
}

struct Monitor {
    level: DiagLevel,
    threshold: f64,
    sup: [f64; 8],
    integral: [f64; 8],
    last_time: f64,
    last_int: Option<[f64; 8]>,
}

impl Monitor {
    fn new(level: DiagLevel, threshold: f64) -> Self {
        Self { level, threshold, sup: [0.0; 8], integral: [0.0; 8], last_time: 0.0, last_int: None }
    }

    /// Update running functionals with the state at `time`; left-point rule in time.
    fn observe(&mut self, model: &Model, step: usize, time: f64, u: &State) -> Result<Option<StoppingFunctionals>, CoreError> {
        let blow = |diagnostic: &str, value: f64| {
            CoreError::BlowUp(BlowUpInfo {
                last_finite_step: step.saturating_sub(1),
                time,
                diagnostic: diagnostic.to_string(),
                value,
            })
        };
        if !u.is_finite() {
            return Err(blow("state", f64::NAN));
        }
        let e = u.norm2(&model.grid);
        if !(e <= self.threshold) {
            return Err(blow("energy", e));
        }
        if self.level != DiagLevel::Full {
            return Ok(None);
        }
        let (sup, int) = stopping_terms(model, u);
        if let Some(prev) = self.last_int {
            let h = time - self.last_time;
            for k in 0..8 {
                self.integral[k] += h * prev[k];
            }
        }
        for k in 0..8 {
            self.sup[k] = self.sup[k].max(sup[k]);
        }
        self.last_int = Some(int);
        self.last_time = time;
        let total: Vec<f64> = (0..8).map(|k| self.sup[k] + self.integral[k]).collect();
        let f = StoppingFunctionals {
            w: total[0],
            six: total[1],
            grad: total[2],
            z: total[3],
            t: total[4],
            r: total[5],
            zero: total[6],
            u: total[7],
        };
        for (name, value) in f.named() {
            if !(value <= self.threshold) {
                return Err(blow(name, value));
            }
        }
        Ok(Some(f))
    }
}

fn record(model: &Model, step: usize, time: f64, u: &State, stopping: Option<StoppingFunctionals>) -> StepDiagnostics {
    StepDiagnostics {
        step,
        time,
        energy: u.norm2(&model.grid),
        v_norm2: v_norm2(model, u),
        a_norm2: model.apply_a(u).norm2(&model.grid),
        constraint: model.constraint_residual(&u.v),
        stopping,
    }
}

/// `X -> S P R(X)`.
fn implicit_part(model: &Model, y: &State, dt: f64) -> State {
    model.solve_a_implicit(&model.project(&model.rotate_coriolis(y, dt)), dt, 1.0)
}

/// Adjoint of [`implicit_part`] followed by the projection.
fn implicit_part_adjoint(model: &Model, lam: &State, dt: f64) -> State {
    let s = model.solve_a_implicit(lam, dt, 1.0);
    model.project(&model.rotate_coriolis(&s, -dt))
}

/// `-[B(a, b) + B(b, a) + A_pr a]`: the linearization of the drift at `b`
/// (without forcing) applied to `a`.
fn linear_drift(model: &Model, a: &State, b: &State) -> State {
    let mut d = State::zeros(&model.grid);
    if model.advection {
        let mut adv = model.advection_pointwise(a, b);
        adv.axpy(1.0, &model.advection_pointwise(b, a));
        d.axpy(-1.0, &model.project(&adv));
    }
    if model.params.beta_t_g != 0.0 {
        d.axpy(-1.0, &model.apply_apr(a));
    }
    d
}

/// Adjoint of `a -> linear_drift(a, b)` on the state space.
fn linear_drift_adjoint(model: &Model, lam: &State, b: &State) -> State {
    let mut d = State::zeros(&model.grid);
    if model.advection {
        // B(., b)^* lam  and  B(b, .)^* lam = -B(b, lam)
        d.axpy(-1.0, &model.apply_b_first_adjoint(b, lam));
        d.axpy(1.0, &model.apply_b(b, lam));
    }
    if model.params.beta_t_g != 0.0 {
        d.axpy(-1.0, &model.apply_apr_adjoint(lam));
    }
    d
}

struct RunInputs<'a> {
    model: &'a Model,
    noise: Option<&'a NoiseModel>,
    stream: Option<WienerStream>,
    cfg: &'a IntegratorConfig,
}

fn check_initial(model: &Model, x0: &State) -> Result<(), CoreError> {
    x0.check_shape(&model.grid)?;
    x0.check_finite()?;
    Ok(())
}

fn integrate(inp: RunInputs<'_>, x0: &State, eq: Equation<'_>) -> Result<Trajectory, CoreError> {
    let RunInputs { model, noise, stream, cfg } = inp;
    cfg.validate()?;
    check_initial(model, x0)?;
    let n_steps = cfg.n_steps();
    let dt = cfg.dt;
    if let (Some(nm), Some(st)) = (noise, stream) {
        if nm.m() != st.m {
            return Err(CoreError::InvalidInput(format!("stream has {} components, noise model {}", st.m, nm.m())));
        }
    }
    let base_covers = |b: &Trajectory| -> Result<(), CoreError> {
        if b.t_end() + 1e-12 < cfg.t_end {
            return Err(CoreError::InvalidInput(format!("base trajectory ends at {} < {}", b.t_end(), cfg.t_end)));
        }
        Ok(())
    };
    match &eq {
        Equation::Linearized { base, .. } | Equation::Deviation { base, .. } => base_covers(base)?,
        Equation::Full { .. } => {}
    }
    let mut monitor = Monitor::new(cfg.diagnostics, cfg.blowup_threshold);
    let mut traj = Trajectory {
        dt,
        n_steps,
        steps: vec![0],
        times: vec![0.0],
        states: vec![x0.clone()],
        diagnostics: Vec::new(),
        stream,
    };
    let stop0 = monitor.observe(model, 0, 0.0, x0)?;
    traj.diagnostics.push(record(model, 0, 0.0, x0, stop0));
    let mut x = x0.clone();
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let mid = t + 0.5 * dt;
        let mut y = x.clone();
        match &eq {
            Equation::Full { forcing, control, noise_scale } => {
                if model.advection {
                    y.axpy(-dt, &model.apply_b(&x, &x));
                }
                if model.params.beta_t_g != 0.0 {
                    y.axpy(-dt, &model.apply_apr(&x));
                }
                if let Some(f) = model.forcing(forcing, t) {
                    y.axpy(-dt, &f);
                }
                if let (Some(h), Some(nm)) = (control, noise) {
                    y.axpy(dt, &nm.sigma_apply(model, &x, h.at(mid))?);
                }
                if *noise_scale != 0.0 {
                    if let (Some(nm), Some(st)) = (noise, stream) {
                        let dw = st.increment(n as u64, dt)?;
                        y.axpy(*noise_scale, &nm.sigma_apply(model, &x, &dw)?);
                    }
                }
            }
            Equation::Linearized { base, control, noise_scale } => {
                let u0 = base.state_at_step(n, dt);
                y.axpy(dt, &linear_drift(model, &x, &u0));
                if let (Some(h), Some(nm)) = (control, noise) {
                    y.axpy(dt, &nm.sigma_apply(model, &u0, h.at(mid))?);
                }
                if *noise_scale != 0.0 {
                    if let (Some(nm), Some(st)) = (noise, stream) {
                        let dw = st.increment(n as u64, dt)?;
                        y.axpy(*noise_scale, &nm.sigma_apply(model, &u0, &dw)?);
                    }
                }
            }
            Equation::Deviation { base, coupling, inv_lambda } => {
                let u0 = base.state_at_step(n, dt);
                let mut ue = u0.clone();
                ue.axpy(*coupling, &x);
                if model.advection {
                    let mut adv = model.advection_pointwise(&x, &ue);
                    adv.axpy(1.0, &model.advection_pointwise(&u0, &x));
                    y.axpy(-dt, &model.project(&adv));
                }
                if model.params.beta_t_g != 0.0 {
                    y.axpy(-dt, &model.apply_apr(&x));
                }
                if let (Some(nm), Some(st)) = (noise, stream) {
                    let dw = st.increment(n as u64, dt)?;
                    y.axpy(*inv_lambda, &nm.sigma_apply(model, &ue, &dw)?);
                }
            }
        }
        x = implicit_part(model, &y, dt);
        let step = n + 1;
        let time = step as f64 * dt;
        let stop = monitor.observe(model, step, time, &x)?;
        if step % cfg.store_every == 0 || step == n_steps {
            traj.steps.push(step);
            traj.times.push(time);
            traj.states.push(x.clone());
            traj.diagnostics.push(record(model, step, time, &x, stop));
        }
    }
    Ok(traj)
}

/// Deterministic limit `dU + [AU + B(U) + F(U)] dt = 0`.
pub fn solve_deterministic(model: &Model, u0: &State, forcing: &Forcing, cfg: &IntegratorConfig) -> Result<Trajectory, CoreError> {
    let inp = RunInputs { model, noise: None, stream: None, cfg };
    integrate(inp, u0, Equation::Full { forcing, control: None, noise_scale: 0.0 })
}

/// Scaled stochastic system with noise `sqrt(eps) sigma(U) dW`. With
/// `eps = 0` the result equals [`solve_deterministic`] bit for bit.
pub fn solve_stochastic(
    model: &Model,
    u0: &State,
    forcing: &Forcing,
    noise: &NoiseModel,
    stream: WienerStream,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    let inp = RunInputs { model, noise: Some(noise), stream: Some(stream), cfg };
    integrate(inp, u0, Equation::Full { forcing, control: None, noise_scale: cfg.eps.sqrt() })
}

/// Controlled skeleton `dU_h + [AU_h + B(U_h) + F(U_h)] dt = sigma(U_h) h dt`.
pub fn solve_skeleton_ldp(
    model: &Model,
    u0: &State,
    forcing: &Forcing,
    noise: &NoiseModel,
    h: &ControlPath,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    check_control(noise, h, cfg)?;
    let inp = RunInputs { model, noise: Some(noise), stream: None, cfg };
    integrate(inp, u0, Equation::Full { forcing, control: Some(h), noise_scale: 0.0 })
}

/// Linear skeleton `dR + [AR + B(R, U0) + B(U0, R) + A_pr R + ER] dt = sigma(U0) h dt`, `R(0) = 0`.
pub fn solve_skeleton_mdp(
    model: &Model,
    base: &Trajectory,
    noise: &NoiseModel,
    h: &ControlPath,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    check_control(noise, h, cfg)?;
    let inp = RunInputs { model, noise: Some(noise), stream: None, cfg };
    let zero = State::zeros(&model.grid);
    integrate(inp, &zero, Equation::Linearized { base, control: Some(h), noise_scale: 0.0 })
}

/// Central limit equation `dY + [AY + B(U0, Y) + B(Y, U0) + A_pr Y + EY] dt = sigma(U0) dW`, `Y(0) = 0`.
pub fn solve_clt_limit(
    model: &Model,
    base: &Trajectory,
    noise: &NoiseModel,
    stream: WienerStream,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    let inp = RunInputs { model, noise: Some(noise), stream: Some(stream), cfg };
    let zero = State::zeros(&model.grid);
    integrate(inp, &zero, Equation::Linearized { base, control: None, noise_scale: 1.0 })
}

/// Direct integration of the deviation process `R = (U^eps - U0) / (sqrt(eps) lambda)`.
pub fn solve_deviation(
    model: &Model,
    base: &Trajectory,
    noise: &NoiseModel,
    stream: WienerStream,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    if !(cfg.eps > 0.0) {
        return Err(CoreError::InvalidInput("the deviation process needs eps > 0".into()));
    }
    let lambda = cfg.lambda();
    let inp = RunInputs { model, noise: Some(noise), stream: Some(stream), cfg };
    let zero = State::zeros(&model.grid);
    let eq = Equation::Deviation { base, coupling: cfg.eps.sqrt() * lambda, inv_lambda: 1.0 / lambda };
    integrate(inp, &zero, eq)
}

/// `R = (U^eps - U0) / (sqrt(eps) lambda)` from a stochastic run and the
/// deterministic run it deviates from, on the stored steps of `u_eps`.
pub fn deviation_from_pair(model: &Model, u_eps: &Trajectory, base: &Trajectory, cfg: &IntegratorConfig) -> Result<Trajectory, CoreError> {
    if !(cfg.eps > 0.0) {
        return Err(CoreError::InvalidInput("the deviation process needs eps > 0".into()));
    }
    if base.stream.is_some() {
        return Err(CoreError::InvalidInput("base trajectory must be noise free".into()));
    }
    let scale = 1.0 / (cfg.eps.sqrt() * cfg.lambda());
    let mut out = u_eps.clone();
    out.states = u_eps
        .steps
        .iter()
        .zip(&u_eps.states)
        .map(|(&n, s)| (s - &base.state_at_step(n, u_eps.dt)).scaled(scale))
        .collect();
    out.diagnostics = out
        .steps
        .iter()
        .zip(&out.times)
        .zip(&out.states)
        .map(|((&n, &t), s)| record(model, n, t, s, None))
        .collect();
    Ok(out)
}

/// Checks that two runs were driven by the same Wiener path.
pub fn ensure_coupled(a: &Trajectory, b: &Trajectory) -> Result<(), CoreError> {
    match (a.stream, b.stream) {
        (Some(x), Some(y)) if x == y => Ok(()),
        (x, y) => Err(CoreError::MismatchedStreams(format!("{x:?}"), format!("{y:?}"))),
    }
}

fn check_control(noise: &NoiseModel, h: &ControlPath, cfg: &IntegratorConfig) -> Result<(), CoreError> {
    if h.m() != noise.m() {
        return Err(CoreError::InvalidInput(format!("control has {} components, noise model {}", h.m(), noise.m())));
    }
    if h.times[0] > 1e-12 || *h.times.last().unwrap() + 1e-12 < cfg.t_end {
        return Err(CoreError::InvalidInput("control path must cover [0, t_end]".into()));
    }
    Ok(())
}

// ---- discrete adjoints of the controlled maps -------------------------------

/// Endpoint of the linear skeleton, `h -> R_h(t_end)`.
pub fn mdp_endpoint(model: &Model, base: &Trajectory, noise: &NoiseModel, h: &ControlPath, cfg: &IntegratorConfig) -> Result<State, CoreError> {
    let mut c = *cfg;
    c.store_every = cfg.n_steps();
    c.diagnostics = DiagLevel::Energy;
    Ok(solve_skeleton_mdp(model, base, noise, h, &c)?.final_state().clone())
}

/// Gradient of `h -> <lam, R_h(t_end)>` as a control path on the blocks of `blocks`.
pub fn mdp_endpoint_adjoint(
    model: &Model,
    base: &Trajectory,
    noise: &NoiseModel,
    lam_end: &State,
    blocks: &ControlPath,
    cfg: &IntegratorConfig,
) -> Result<ControlPath, CoreError> {
    cfg.validate()?;
    let dt = cfg.dt;
    let mut grad = blocks.scaled(0.0);
    let mut lam = model.project(lam_end);
    for n in (0..cfg.n_steps()).rev() {
        let mu = implicit_part_adjoint(model, &lam, dt);
        let u0 = base.state_at_step(n, dt);
        let b = blocks.block_of(n as f64 * dt + 0.5 * dt);
        for k in 0..noise.m() {
            grad.coeffs[b][k] += dt * noise.mode(model, k, &u0).dot(&model.grid, &mu);
        }
        let mut next = mu.clone();
        next.axpy(dt, &linear_drift_adjoint(model, &mu, &u0));
        lam = next;
    }
    Ok(grad)
}

/// Skeleton run storing every step, for use with [`ldp_adjoint`].
pub fn ldp_forward(
    model: &Model,
    u0: &State,
    forcing: &Forcing,
    noise: &NoiseModel,
    h: &ControlPath,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, CoreError> {
    let mut c = *cfg;
    c.store_every = 1;
    c.diagnostics = DiagLevel::Energy;
    solve_skeleton_ldp(model, u0, forcing, noise, h, &c)
}

/// Gradient of `h -> <lam, U_h(t_end)>` by the discrete adjoint of the scheme,
/// linearized along the stored forward run `fwd`.
pub fn ldp_adjoint(
    model: &Model,
    noise: &NoiseModel,
    h: &ControlPath,
    fwd: &Trajectory,
    lam_end: &State,
) -> Result<ControlPath, CoreError> {
    let dt = fwd.dt;
    if fwd.states.len() != fwd.n_steps + 1 {
        return Err(CoreError::InvalidInput("adjoint needs every forward step".into()));
    }
    let mut grad = h.scaled(0.0);
    let mut lam = model.project(lam_end);
    for n in (0..fwd.n_steps).rev() {
        let mu = implicit_part_adjoint(model, &lam, dt);
        let x = &fwd.states[n];
        let mid = n as f64 * dt + 0.5 * dt;
        let b = h.block_of(mid);
        let hk = h.at(mid);
        let mut next = mu.clone();
        next.axpy(dt, &linear_drift_adjoint(model, &mu, x));
        for k in 0..noise.m() {
            grad.coeffs[b][k] += dt * noise.mode(model, k, x).dot(&model.grid, &mu);
            if hk[k] != 0.0 {
                next.axpy(dt * hk[k], &noise.linear_adjoint(model, k, &mu));
            }
        }
        lam = next;
    }
    Ok(grad)
}
