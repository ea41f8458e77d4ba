//! Finite-mode multiplicative noise `sigma(U) = sum_k sigma_k(U) e_k`, Wiener
//! increments and empirical checks of the structural bounds on `sigma`.
//!
//! Every mode map is affine in `U`: `sigma_k(U) = c_k + M_k U` with `M_k`
//! linear. The solvers and the adjoint gradients rely on this.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::CoreError;
use crate::field::{sample, Components, State};
use crate::norms::{self, NormKind};
use crate::operators::Model;

/// One mode of the shipped family.
///
/// With `phi(x,y,z) = cos(2 pi (kx x + ky y) / L + phase) cos(kz pi (z + h) / h)`
/// and `psi` the same profile without the vertical factor:
///
/// - velocity: `a_v phi e(angle) + b psi v + c psi A3(d_dir A2 v)`
/// - temperature: `a_t phi + b psi T`
///
/// followed by the projection onto the state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShippedMode {
    pub kx: i32,
    pub ky: i32,
    #[serde(default)]
    pub kz: u32,
    #[serde(default)]
    pub phase: f64,
    /// Direction of the additive velocity forcing, radians from the x axis.
    #[serde(default)]
    pub angle: f64,
    #[serde(default)]
    pub a_v: f64,
    #[serde(default)]
    pub a_t: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
    /// Horizontal direction of the gradient term (0 = x, 1 = y).
    #[serde(default)]
    pub grad_dir: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseFamily {
    Shipped { modes: Vec<ShippedMode> },
    /// Single mode `sigma_1(U) = c U`.
    ScalarMultiple { c: f64 },
}

/// Asserted bounds `C, eta_0..eta_3, gamma` of the structural inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub c: f64,
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
struct ModeProfile {
    phi: Vec<f64>,
    psi: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    family: NoiseFamily,
    pub declared: DeclaredConstants,
    profiles: Vec<ModeProfile>,
}

impl NoiseModel {
    pub fn new(model: &Model, family: NoiseFamily, declared: Option<DeclaredConstants>) -> Result<Self, CoreError> {
        let g = &model.grid;
        let profiles = match &family {
            NoiseFamily::Shipped { modes } => modes
                .iter()
                .map(|m| {
                    if m.grad_dir > 1 {
                        return Err(CoreError::InvalidInput(format!("grad_dir must be 0 or 1, got {}", m.grad_dir)));
                    }
                    for x in [m.phase, m.angle, m.a_v, m.a_t, m.b, m.c] {
                        if !x.is_finite() {
                            return Err(CoreError::InvalidInput("noise parameters must be finite".into()));
                        }
                    }
                    let (l, h) = (g.length(), g.depth());
                    let arg = move |x: f64, y: f64| 2.0 * PI * (m.kx as f64 * x + m.ky as f64 * y) / l + m.phase;
                    Ok(ModeProfile {
                        phi: sample(g, |x, y, z| arg(x, y).cos() * (m.kz as f64 * PI * (z + h) / h).cos()),
                        psi: sample(g, |x, y, _| arg(x, y).cos()),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            NoiseFamily::ScalarMultiple { c } => {
                if !c.is_finite() {
                    return Err(CoreError::InvalidInput("noise parameters must be finite".into()));
                }
                Vec::new()
            }
        };
        let mut out = Self {
            family,
            declared: DeclaredConstants { c: 0.0, eta0: 0.0, eta1: 0.0, eta2: 0.0, eta3: 0.0, gamma: 0.0 },
            profiles,
        };
        out.declared = declared.unwrap_or_else(|| out.analytic_bounds(model));
        Ok(out)
    }

    /// No noise at all (`m = 0`).
    pub fn zero(model: &Model) -> Self {
        Self::new(model, NoiseFamily::Shipped { modes: Vec::new() }, None).expect("empty family is valid")
    }

    /// The default eight-mode model: additive, multiplicative and
    /// barotropic-gradient dependence with small amplitudes.
    pub fn shipped_default(model: &Model) -> Self {
        let modes = (0..8)
            .map(|k| {
                let (kx, ky) = [(1, 0), (0, 1), (1, 1), (1, -1), (2, 0), (0, 2), (2, 1), (1, 2)][k];
                ShippedMode {
                    kx,
                    ky,
                    kz: (k % 3) as u32,
                    phase: 0.37 * k as f64,
                    angle: 0.9 * k as f64,
                    a_v: 0.5 / (1.0 + k as f64),
                    a_t: 0.3 / (1.0 + k as f64),
                    b: 0.1,
                    c: 0.05,
                    grad_dir: k % 2,
                }
            })
            .collect();
        Self::new(model, NoiseFamily::Shipped { modes }, None).expect("default family is valid")
    }

    pub fn family(&self) -> &NoiseFamily {
        &self.family
    }

    /// Number of Wiener components `m`.
    pub fn m(&self) -> usize {
        match &self.family {
            NoiseFamily::Shipped { modes } => modes.len(),
            NoiseFamily::ScalarMultiple { .. } => 1,
        }
    }

    /// True when no mode depends on `U`.
    pub fn is_additive(&self) -> bool {
        match &self.family {
            NoiseFamily::Shipped { modes } => modes.iter().all(|m| m.b == 0.0 && m.c == 0.0),
            NoiseFamily::ScalarMultiple { c } => *c == 0.0,
        }
    }

    /// Constant part `c_k` (before projection).
    fn offset_raw(&self, model: &Model, k: usize) -> State {
        let g = &model.grid;
        let mut out = State::zeros(g);
        if let NoiseFamily::Shipped { modes } = &self.family {
            let m = &modes[k];
            let phi = &self.profiles[k].phi;
            let (s, c) = m.angle.sin_cos();
            if m.a_v != 0.0 {
                out.v = [phi.iter().map(|p| m.a_v * c * p).collect(), phi.iter().map(|p| m.a_v * s * p).collect()];
            }
            if m.a_t != 0.0 {
                out.t = phi.iter().map(|p| m.a_t * p).collect();
            }
        }
        out
    }

    /// Linear part `M_k U` (before projection).
    fn linear_raw(&self, model: &Model, k: usize, u: &State) -> State {
        let g = &model.grid;
        match &self.family {
            NoiseFamily::ScalarMultiple { c } => u.scaled(*c),
            NoiseFamily::Shipped { modes } => {
                let m = &modes[k];
                let psi = &self.profiles[k].psi;
                let mut out = State::zeros(g);
                if m.b != 0.0 {
                    out = u.map(|f| f.iter().zip(psi).map(|(a, p)| m.b * a * p).collect());
                }
                if m.c != 0.0 {
                    let nxy = g.nxy();
                    for comp in 0..2 {
                        let mean = calc::vertical_mean(g, &u.v[comp]);
                        let d = if m.grad_dir == 0 { calc::dx(g, &mean) } else { calc::dy(g, &mean) };
                        for i in 0..g.len() {
                            out.v[comp][i] += m.c * psi[i] * d[i % nxy];
                        }
                    }
                }
                out
            }
        }
    }

    /// Adjoint of `U -> project(M_k U)` on the state space.
    pub fn linear_adjoint(&self, model: &Model, k: usize, lam: &State) -> State {
        let g = &model.grid;
        match &self.family {
            NoiseFamily::ScalarMultiple { c } => model.project(&lam.scaled(*c)),
            NoiseFamily::Shipped { modes } => {
                let m = &modes[k];
                let psi = &self.profiles[k].psi;
                let mut out = State::zeros(g);
                if m.b != 0.0 {
                    out = lam.map(|f| f.iter().zip(psi).map(|(a, p)| m.b * a * p).collect());
                }
                if m.c != 0.0 {
                    // (psi A3 d A2)^* = -A3 d A2 (psi .)
                    let nxy = g.nxy();
                    for comp in 0..2 {
                        let weighted: Vec<f64> = lam.v[comp].iter().zip(psi).map(|(a, p)| a * p).collect();
                        let mean = calc::vertical_mean(g, &weighted);
                        let d = if m.grad_dir == 0 { calc::dx(g, &mean) } else { calc::dy(g, &mean) };
                        for i in 0..g.len() {
                            out.v[comp][i] -= m.c * d[i % nxy];
                        }
                    }
                }
                model.project(&out)
            }
        }
    }

    /// `sigma_k(U)` on the state space.
    pub fn mode(&self, model: &Model, k: usize, u: &State) -> State {
        let mut raw = self.linear_raw(model, k, u);
        raw.axpy(1.0, &self.offset_raw(model, k));
        model.project(&raw)
    }

    /// `project(M_k d)`: the derivative of `sigma_k` in direction `d`.
    pub fn mode_linear(&self, model: &Model, k: usize, d: &State) -> State {
        model.project(&self.linear_raw(model, k, d))
    }

    /// All mode maps at `U`.
    pub fn modes(&self, model: &Model, u: &State) -> Vec<State> {
        (0..self.m()).map(|k| self.mode(model, k, u)).collect()
    }

    /// `sigma(U) xi = sum_k xi_k sigma_k(U)`.
    pub fn sigma_apply(&self, model: &Model, u: &State, xi: &[f64]) -> Result<State, CoreError> {
        if xi.len() != self.m() {
            return Err(CoreError::InvalidInput(format!("xi has {} entries, model has {} modes", xi.len(), self.m())));
        }
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(CoreError::InvalidInput("xi must be finite".into()));
        }
        let mut out = State::zeros(&model.grid);
        if self.m() == 0 {
            return Ok(out);
        }
        // linear in xi: combine raw pieces then project once
        let mut raw = State::zeros(&model.grid);
        for (k, &x) in xi.iter().enumerate() {
            if x != 0.0 {
                raw.axpy(x, &self.linear_raw(model, k, u));
                raw.axpy(x, &self.offset_raw(model, k));
            }
        }
        out.axpy(1.0, &model.project(&raw));
        Ok(out)
    }

    /// Analytic upper bounds for the shipped family (generous by a factor 2).
    pub fn analytic_bounds(&self, model: &Model) -> DeclaredConstants {
        let g = &model.grid;
        let vol = g.domain().volume();
        let (l, h) = (g.length(), g.depth());
        let mu = model.params.mu_v;
        let safety = 2.0;
        let mut d = DeclaredConstants { c: 0.0, eta0: 0.0, eta1: 0.0, eta2: 0.0, eta3: 0.0, gamma: 0.0 };
        let m = self.m().max(1) as f64;
        match &self.family {
            NoiseFamily::ScalarMultiple { c } => {
                let c2 = c * c;
                d.c = safety * c2 * 4.0;
                d.eta0 = 0.0;
                d.eta1 = safety * c2 / (mu * mu).min(1.0);
                d.gamma = d.eta1;
            }
            NoiseFamily::Shipped { modes } => {
                let mut c_max = 0.0f64;
                for (k, md) in modes.iter().enumerate() {
                    let gh2 = (2.0 * PI / l).powi(2) * ((md.kx * md.kx + md.ky * md.ky) as f64);
                    let gz2 = (md.kz as f64 * PI / h).powi(2);
                    let a2 = md.a_v * md.a_v + md.a_t * md.a_t;
                    let (b2, c2) = (md.b * md.b, md.c * md.c);
                    let l6 = norms::norm(g, &self.profiles[k].phi, NormKind::Lp { p: 6.0 }).unwrap_or(0.0).powi(2);
                    let phi_bar = calc::vertical_mean(g, &self.profiles[k].phi);
                    let phi_bar2 = calc::dot2(g, &phi_bar, &phi_bar);
                    let bounds = [
                        3.0 * (a2 * vol + b2),
                        3.0 * (a2 * (1.0 + gh2 + gz2) * vol + b2 * (3.0 + 2.0 * gh2) + c2 * (1.0 + 2.0 * gh2)),
                        2.0 * (b2 + c2),
                        2.0 * (b2 * (3.0 + 2.0 * gh2) + c2 * (1.0 + 2.0 * gh2)),
                        2.0 * (4.0 * md.a_v * md.a_v * l6 + b2),
                        2.0 * (md.a_t * md.a_t * l6 + b2),
                        3.0 * (a2 * (1.0 + gh2) * phi_bar2 + (b2 * (3.0 + 2.0 * gh2) + c2 * (1.0 + 2.0 * gh2)) / h),
                        2.0 * a2 * gz2 * vol + 2.0 * b2,
                    ];
                    c_max += bounds.iter().cloned().fold(0.0, f64::max);
                    d.eta0 += 3.0 * c2;
                    d.eta1 += 6.0 * c2 / (mu * mu);
                    d.gamma += 4.0 * c2 / (mu * mu);
                    d.eta2 += 6.0 * c2;
                }
                // L^6 bounds are only stable up to the truncation; pad them
                d.c = safety * c_max * m.max(2.0);
                d.eta0 *= safety;
                d.eta1 *= safety;
                d.gamma *= safety;
                d.eta2 *= safety;
            }
        }
        d
    }
}

/// Counter-based Wiener increments keyed by `(seed, stream_id, step)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WienerStream {
    pub seed: u64,
    pub stream_id: u64,
    pub m: usize,
}

/// Word offset reserved per step; far above what `m` normal draws consume.
const STEP_STRIDE: u128 = 1 << 32;

impl WienerStream {
    pub fn new(seed: u64, stream_id: u64, m: usize) -> Self {
        Self { seed, stream_id, m }
    }

    /// `Delta W` of step `step`: `m` independent `N(0, dt)` draws.
    pub fn increment(&self, step: u64, dt: f64) -> Result<Vec<f64>, CoreError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CoreError::InvalidInput(format!("dt must be positive, got {dt}")));
        }
        let mut out = vec![0.0; self.m];
        self.fill(step, dt.sqrt(), &mut out);
        Ok(out)
    }

    fn fill(&self, step: u64, scale: f64, out: &mut [f64]) {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(step as u128 * STEP_STRIDE);
        for x in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = scale * z;
        }
    }

    pub fn increments(&self, dt: f64, n_steps: usize) -> Result<Vec<Vec<f64>>, CoreError> {
        (0..n_steps as u64).map(|s| self.increment(s, dt)).collect()
    }
}

/// Best-fit constants and verdict for one structural inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityFit {
    pub name: String,
    /// Smallest `C` valid on the sample set given the declared `eta`.
    pub fitted_c: f64,
    /// Smallest `eta` valid given the declared `C` (`None` when the inequality has no `eta`).
    pub fitted_eta: Option<f64>,
    pub declared_c: f64,
    pub declared_eta: Option<f64>,
    /// Largest `LHS / (C a + eta b)` with declared constants.
    pub worst_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub n_samples: usize,
    pub fits: Vec<InequalityFit>,
    pub pass: bool,
}

struct Sample {
    lhs: f64,
    a: f64,
    b: f64,
}

fn fit(name: &str, samples: &[Sample], declared_c: f64, declared_eta: Option<f64>) -> InequalityFit {
    let eta = declared_eta.unwrap_or(0.0);
    let mut fitted_c = 0.0f64;
    let mut fitted_eta = 0.0f64;
    let mut worst = 0.0f64;
    for s in samples {
        if s.a > 0.0 {
            fitted_c = fitted_c.max((s.lhs - eta * s.b) / s.a);
        }
        if s.b > 0.0 {
            fitted_eta = fitted_eta.max((s.lhs - declared_c * s.a) / s.b);
        }
        let rhs = declared_c * s.a + eta * s.b;
        let r = if rhs > 0.0 {
            s.lhs / rhs
        } else if s.lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(r);
    }
    InequalityFit {
        name: name.to_string(),
        fitted_c: fitted_c.max(0.0),
        fitted_eta: declared_eta.map(|_| fitted_eta.max(0.0)),
        declared_c,
        declared_eta,
        worst_ratio: worst,
        pass: worst <= 1.0 + 1e-9,
    }
}

fn h1(model: &Model, s: &State) -> f64 {
    s.components().iter().map(|c| norms::h1_sq(&model.grid, c)).sum()
}


/// Empirical check of the structural bounds on the sample set. Lipschitz-type
/// inequalities use consecutive sample pairs.
pub fn estimate_constants(model: &Model, noise: &NoiseModel, states: &[State]) -> Result<ConstantsReport, CoreError> {
    if states.len() < 2 {
        return Err(CoreError::InvalidInput("estimate_constants needs at least two sample states".into()));
    }
    let g = &model.grid;
    let d = noise.declared;
    let l6sq = |f: &[f64]| norms::norm(g, &f.to_vec(), NormKind::Lp { p: 6.0 }).map(|x| x * x);
    let mut s: Vec<Vec<Sample>> = (0..9).map(|_| Vec::new()).collect();
    for (idx, u) in states.iter().enumerate() {
        u.check_finite()?;
        let modes = noise.modes(model, u);
        let norm_h = u.norm2(g);
        let norm_v = h1(model, u);
        let au = model.apply_a(u).norm2(g);
        s[0].push(Sample { lhs: modes.iter().map(|m| m.norm2(g)).sum(), a: 1.0 + norm_h, b: norm_v });
        s[1].push(Sample { lhs: modes.iter().map(|m| h1(model, m)).sum(), a: 1.0 + norm_v, b: au });
        let rv = [calc::remainder(g, &u.v[0]), calc::remainder(g, &u.v[1])];
        let rv_l6 = norms::norm(g, &rv, NormKind::Lp { p: 6.0 })?.powi(2);
        let mut l6_v = 0.0;
        let mut l6_t = 0.0;
        let mut bar_v = 0.0;
        let mut dz_v = 0.0;
        let mut dz_t = 0.0;
        for m in &modes {
            let r = [calc::remainder(g, &m.v[0]), calc::remainder(g, &m.v[1])];
            l6_v += norms::norm(g, &r, NormKind::Lp { p: 6.0 })?.powi(2);
            l6_t += l6sq(&m.t)?;
            for c in 0..2 {
                let mean = calc::vertical_mean(g, &m.v[c]);
                let [mx, my] = calc::grad(g, &mean);
                bar_v += calc::dot2(g, &mean, &mean) + calc::dot2(g, &mx, &mx) + calc::dot2(g, &my, &my);
                let dz = calc::dz(g, &m.v[c]);
                dz_v += calc::dot3(g, &dz, &dz);
            }
            let dz = calc::dz(g, &m.t);
            dz_t += calc::dot3(g, &dz, &dz);
        }
        s[4].push(Sample { lhs: l6_v, a: 1.0 + rv_l6, b: 0.0 });
        s[5].push(Sample { lhs: l6_t, a: 1.0 + l6sq(&u.t)?, b: 0.0 });
        let mut stokes = 0.0;
        for c in 0..2 {
            let lap = calc::lap_h(g, &calc::vertical_mean(g, &u.v[c]));
            stokes += calc::dot2(g, &lap, &lap);
        }
        s[6].push(Sample { lhs: bar_v, a: 1.0 + norm_v, b: stokes });
        let grad3_dz = |f: &[f64]| -> f64 {
            let fz = calc::dz(g, f);
            norms::grad_sq(g, &fz) + norms::dz_sq(g, &fz)
        };
        s[7].push(Sample { lhs: dz_v, a: 1.0 + norm_v, b: grad3_dz(&u.v[0]) + grad3_dz(&u.v[1]) });
        s[8].push(Sample { lhs: dz_t, a: 1.0 + norm_v, b: grad3_dz(&u.t) });
        if idx + 1 < states.len() {
            let w = &states[idx + 1];
            let diff = u - w;
            let dm: Vec<State> = (0..noise.m()).map(|k| noise.mode_linear(model, k, &diff)).collect();
            let dv = h1(model, &diff);
            s[2].push(Sample { lhs: dm.iter().map(|m| m.norm2(g)).sum(), a: dv, b: 0.0 });
            s[3].push(Sample { lhs: dm.iter().map(|m| h1(model, m)).sum(), a: dv, b: model.apply_a(&diff).norm2(g) });
        }
    }
    let fits = vec![
        fit("bound_h", &s[0], d.c, Some(d.eta0)),
        fit("bound_v", &s[1], d.c, Some(d.eta1)),
        fit("lipschitz_h", &s[2], d.c, None),
        fit("lipschitz_v", &s[3], d.c, Some(d.gamma)),
        fit("remainder_l6", &s[4], d.c, None),
        fit("temperature_l6", &s[5], d.c, None),
        fit("barotropic_v", &s[6], d.c, Some(d.eta2)),
        fit("vertical_derivative_v", &s[7], d.c, Some(d.eta3)),
        fit("vertical_derivative_t", &s[8], d.c, Some(d.eta3)),
    ];
    let pass = fits.iter().all(|f| f.pass);
    Ok(ConstantsReport { n_samples: states.len(), fits, pass })
}

/// Piecewise-constant control `h: [0, t] -> R^m`.
///
/// `times` holds the block boundaries (`coeffs.len() + 1` increasing values);
/// block `i` covers `[times[i], times[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub times: Vec<f64>,
    pub coeffs: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(times: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self, CoreError> {
        if times.len() != coeffs.len() + 1 || coeffs.is_empty() {
            return Err(CoreError::InvalidInput("control path needs n blocks and n + 1 boundaries".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(CoreError::InvalidInput("control block boundaries must increase".into()));
        }
        let m = coeffs[0].len();
        if coeffs.iter().any(|c| c.len() != m || c.iter().any(|x| !x.is_finite())) {
            return Err(CoreError::InvalidInput("control coefficients must be finite with a common length".into()));
        }
        Ok(Self { times, coeffs })
    }

    /// `n_blocks` equal blocks on `[0, t_end]`, all zero.
    pub fn zeros(t_end: f64, n_blocks: usize, m: usize) -> Self {
        let times = (0..=n_blocks).map(|i| t_end * i as f64 / n_blocks as f64).collect();
        Self { times, coeffs: vec![vec![0.0; m]; n_blocks] }
    }

    /// Constant control on `[0, t_end]`.
    pub fn constant(t_end: f64, value: Vec<f64>) -> Self {
        Self { times: vec![0.0, t_end], coeffs: vec![value] }
    }

    pub fn m(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn n_blocks(&self) -> usize {
        self.coeffs.len()
    }

    pub fn block_len(&self, i: usize) -> f64 {
        self.times[i + 1] - self.times[i]
    }

    /// Index of the block containing `t` (clamped to the first/last block).
    pub fn block_of(&self, t: f64) -> usize {
        let n = self.coeffs.len();
        match self.times[1..n].iter().position(|&b| t < b) {
            Some(i) => i,
            None => n - 1,
        }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        &self.coeffs[self.block_of(t)]
    }

    /// `1/2 int |h|^2 dt`, exact for the piecewise-constant path.
    pub fn action(&self) -> f64 {
        0.5 * self.inner(self)
    }

    /// `int h . g dt` for two paths on the same blocks.
    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| self.block_len(i) * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { times: self.times.clone(), coeffs: self.coeffs.iter().map(|c| c.iter().map(|x| a * x).collect()).collect() }
    }

    /// `self + a * other` on the same blocks.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + a * q).collect())
            .collect();
        Self { times: self.times.clone(), coeffs }
    }

    /// Flat coordinates `x = sqrt(dt_i) h_i`, so that the action is `|x|^2 / 2`.
    pub fn to_scaled_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_blocks() * self.m());
        for (i, c) in self.coeffs.iter().enumerate() {
            let s = self.block_len(i).sqrt();
            out.extend(c.iter().map(|x| s * x));
        }
        out
    }

    /// Inverse of [`ControlPath::to_scaled_vec`] on the blocks of `self`.
    pub fn from_scaled_vec(&self, x: &[f64]) -> Self {
        let m = self.m();
        let coeffs = (0..self.n_blocks())
            .map(|i| {
                let s = self.block_len(i).sqrt();
                x[i * m..(i + 1) * m].iter().map(|v| v / s).collect()
            })
            .collect();
        Self { times: self.times.clone(), coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, Grid};
    use crate::operators::PhysicalParams;

    fn model() -> Model {
        let g = Grid::new(Domain::new(1.0, 0.5, 8, 8, 5).unwrap()).unwrap();
        Model::new(g, PhysicalParams::default()).unwrap()
    }

    #[test]
    fn increments_are_reproducible_and_random_access() {
        let s = WienerStream::new(42, 7, 3);
        let a = s.increments(0.01, 20).unwrap();
        let b = s.increments(0.01, 20).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.increment(13, 0.01).unwrap(), a[13]);
        let other = WienerStream::new(42, 8, 3).increments(0.01, 20).unwrap();
        assert_ne!(a, other);
        assert!(s.increment(0, 0.0).is_err());
        assert!(s.increment(0, -1.0).is_err());
    }

    #[test]
    fn sigma_is_linear_in_xi() {
        let m = model();
        let n = NoiseModel::shipped_default(&m);
        let g = &m.grid;
        let u = m.project(&State {
            v: [sample(g, |x, y, z| (6.0 * x).sin() * (1.0 + z) + y), sample(g, |x, _, _| (6.0 * x).cos())],
            t: sample(g, |_, y, z| (6.0 * y).sin() * z),
        });
        let xi: Vec<f64> = (0..8).map(|k| k as f64 * 0.3 - 1.0).collect();
        let eta: Vec<f64> = (0..8).map(|k| (k as f64).sin()).collect();
        let comb: Vec<f64> = xi.iter().zip(&eta).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = n.sigma_apply(&m, &u, &comb).unwrap();
        let mut rhs = n.sigma_apply(&m, &u, &xi).unwrap().scaled(2.0);
        rhs.axpy(-0.5, &n.sigma_apply(&m, &u, &eta).unwrap());
        assert!((&lhs - &rhs).max_abs() < 1e-12);
        assert_eq!(n.sigma_apply(&m, &u, &[0.0; 8]).unwrap().max_abs(), 0.0);
        assert!(n.sigma_apply(&m, &u, &[1.0]).is_err());
    }

    #[test]
    fn control_action_and_lookup() {
        let h = ControlPath::new(vec![0.0, 0.5, 2.0], vec![vec![2.0, 0.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(h.action(), 0.5 * (0.5 * 4.0 + 1.5 * 2.0));
        assert_eq!(h.scaled(2.0).action(), 4.0 * h.action());
        assert_eq!(h.at(0.49), &[2.0, 0.0]);
        assert_eq!(h.at(0.5), &[1.0, -1.0]);
        assert_eq!(h.at(7.0), &[1.0, -1.0]);
        let x = h.to_scaled_vec();
        assert!((0.5 * x.iter().map(|v| v * v).sum::<f64>() - h.action()).abs() < 1e-15);
        assert_eq!(h.from_scaled_vec(&x).coeffs.len(), 2);
        assert!(ControlPath::new(vec![0.0, 0.0], vec![vec![1.0]]).is_err());
    }
}
