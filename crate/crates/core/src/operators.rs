//! Spatial operators of the reformulated primitive equations.
//!
//! The discrete state space consists of band-limited fields (two-thirds rule)
//! whose velocity satisfies `div int_{-h}^0 v dz = 0` with the trapezoid rule.
//! [`Model::project`] is the orthogonal projection onto it. On that space the
//! skew-symmetric form of the trilinear term is exactly antisymmetric.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::CoreError;
use crate::field::{Components, State, VectorField2};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub mu_v: f64,
    pub nu_v: f64,
    pub mu_t: f64,
    pub nu_t: f64,
    /// Coriolis parameter.
    pub f_cor: f64,
    /// Thermal expansion times gravity.
    pub beta_t_g: f64,
    /// Robin coefficient of the surface heat flux condition `dz T + alpha T = 0`.
    pub alpha: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { mu_v: 0.05, nu_v: 0.05, mu_t: 0.05, nu_t: 0.05, f_cor: 1.0, beta_t_g: 0.1, alpha: 0.0 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<(), CoreError> {
        for (name, x) in [("mu_v", self.mu_v), ("nu_v", self.nu_v), ("mu_t", self.mu_t), ("nu_t", self.nu_t)] {
            if !(x.is_finite() && x > 0.0) {
                return Err(CoreError::InvalidInput(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(CoreError::InvalidInput(format!("alpha must be nonnegative, got {}", self.alpha)));
        }
        if !self.f_cor.is_finite() || !self.beta_t_g.is_finite() {
            return Err(CoreError::InvalidInput("f_cor and beta_t_g must be finite".into()));
        }
        Ok(())
    }
}

/// Time profile multiplying a fixed spatial forcing pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeFn {
    Const,
    Exp { rate: f64 },
    Sin { omega: f64, phase: f64 },
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeFn::Const => 1.0,
            TimeFn::Exp { rate } => (rate * t).exp(),
            TimeFn::Sin { omega, phase } => (omega * t + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub profile: State,
    pub time: TimeFn,
}

/// Deterministic source `(F_v, F_T)` as a sum of separable terms.
///
/// It enters the abstract equation as `dU + [AU + B(U) + F(U)] dt = ...` with
/// `F(U) = A_pr U + E U + P_H (F_v, F_T)`, so a physical heating rate `q` is
/// supplied as `F_T = -q`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub terms: Vec<ForcingTerm>,
}

impl Forcing {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn steady(profile: State) -> Self {
        Self { terms: vec![ForcingTerm { profile, time: TimeFn::Const }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Unprojected `(F_v, F_T)(t)`, or `None` when there is no forcing.
    pub fn eval(&self, t: f64) -> Option<State> {
        let mut it = self.terms.iter();
        let first = it.next()?;
        let mut out = first.profile.scaled(first.time.eval(t));
        for term in it {
            out.axpy(term.time.eval(t), &term.profile);
        }
        Some(out)
    }
}

/// Barotropic / baroclinic split `v = A3 vbar + vtilde`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Vertical mean (2D).
    pub vbar: VectorField2,
    /// Remainder (3D).
    pub vtilde: VectorField2,
}

/// Discrete operators bound to a grid and a parameter set.
#[derive(Debug, Clone)]
pub struct Model {
    pub grid: Grid,
    pub params: PhysicalParams,
    /// When false the advection term `B` is dropped from every equation.
    pub advection: bool,
}

impl Model {
    pub fn new(grid: Grid, params: PhysicalParams) -> Result<Self, CoreError> {
        params.validate()?;
        Ok(Self { grid, params, advection: true })
    }

    pub fn without_advection(mut self) -> Self {
        self.advection = false;
        self
    }

    // ---- projection -----------------------------------------------------------

    /// Hydrostatic Helmholtz-Leray projection (velocity only, no truncation).
    pub fn project_h(&self, u: &State) -> State {
        let mut out = u.clone();
        let g = &self.grid;
        let [c1, c2] = self.barotropic_gradient_part(&u.v);
        let nxy = g.nxy();
        let [a, b] = &mut out.v;
        for (i, (x, y)) in a.iter_mut().zip(b.iter_mut()).enumerate() {
            *x -= c1[i % nxy];
            *y -= c2[i % nxy];
        }
        out
    }

    /// `grad Lap^{-1} div (A2 v)` as a 2D vector field.
    fn barotropic_gradient_part(&self, v: &VectorField2) -> [Vec<f64>; 2] {
        let g = &self.grid;
        let inv_h = 1.0 / g.depth();
        let a = g.to_spectral(&calc::vertical_integral(g, &v[0]));
        let b = g.to_spectral(&calc::vertical_integral(g, &v[1]));
        let mut gx = vec![Complex64::default(); g.nxy()];
        let mut gy = vec![Complex64::default(); g.nxy()];
        for p in 0..g.nxy() {
            let k2 = g.k2(p);
            if k2 == 0.0 {
                continue;
            }
            let (kx, ky) = g.wavenumber(p);
            // phi = Lap^{-1} div vbar;  grad phi = -k (k . vbar) / k^2
            let kv = (a[p] * kx + b[p] * ky) * (inv_h / k2);
            gx[p] = kv * kx;
            gy[p] = kv * ky;
        }
        [g.to_physical(&gx), g.to_physical(&gy)]
    }

    /// Two-thirds truncation of every component.
    pub fn truncate(&self, u: &State) -> State {
        u.map(|c| calc::truncate(&self.grid, c))
    }

    /// Orthogonal projection onto the discrete state space (truncation then `P_H`).
    pub fn project(&self, u: &State) -> State {
        self.project_h(&self.truncate(u))
    }

    /// Discrete `L^2` norm of `div int_{-h}^0 v dz`.
    pub fn constraint_residual(&self, v: &VectorField2) -> f64 {
        let g = &self.grid;
        let d = calc::div(g, &calc::vertical_integral(g, &v[0]), &calc::vertical_integral(g, &v[1]));
        calc::dot2(g, &d, &d).sqrt()
    }

    // ---- viscous operator -----------------------------------------------------

    /// `-mu Lap - nu d_zz` with Neumann closures for `v` and the Robin closure for `T`.
    pub fn apply_a(&self, u: &State) -> State {
        let g = &self.grid;
        let p = &self.params;
        let part = |f: &[f64], mu: f64, nu: f64, alpha: f64| -> Vec<f64> {
            let lap = calc::lap_h(g, f);
            let vz = calc::neg_dzz(g, f, alpha);
            lap.iter().zip(&vz).map(|(l, z)| -mu * l + nu * z).collect()
        };
        State {
            v: [part(&u.v[0], p.mu_v, p.nu_v, 0.0), part(&u.v[1], p.mu_v, p.nu_v, 0.0)],
            t: part(&u.t, p.mu_t, p.nu_t, p.alpha),
        }
    }

    /// Quadrature Dirichlet form `a1(v, v#) + a2(T, T#)`.
    pub fn dirichlet_form(&self, u: &State, w: &State) -> f64 {
        let g = &self.grid;
        let p = &self.params;
        let form = |a: &[f64], b: &[f64], mu: f64, nu: f64, alpha: f64| -> f64 {
            let [ax, ay] = calc::grad(g, a);
            let [bx, by] = calc::grad(g, b);
            let ca = calc::dz_cells(g, a);
            let cb = calc::dz_cells(g, b);
            let vert: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum::<f64>() * g.dz() * g.cell_area();
            let top = (g.nz() - 1) * g.nxy();
            let surface: f64 = (0..g.nxy()).map(|i| a[top + i] * b[top + i]).sum::<f64>() * g.cell_area();
            mu * (calc::dot3(g, &ax, &bx) + calc::dot3(g, &ay, &by)) + nu * (vert + alpha * surface)
        };
        form(&u.v[0], &w.v[0], p.mu_v, p.nu_v, 0.0)
            + form(&u.v[1], &w.v[1], p.mu_v, p.nu_v, 0.0)
            + form(&u.t, &w.t, p.mu_t, p.nu_t, p.alpha)
    }

    /// `(I + dt * weight * A)^{-1} U` by tridiagonal solves per horizontal mode.
    pub fn solve_a_implicit(&self, u: &State, dt: f64, weight: f64) -> State {
        let s = dt * weight;
        assert!(s >= 0.0 && s.is_finite(), "dt * weight must be nonnegative");
        if s == 0.0 {
            return u.clone();
        }
        let g = &self.grid;
        let p = &self.params;
        let solve = |f: &[f64], mu: f64, nu: f64, alpha: f64| -> Vec<f64> {
            let c = g.to_spectral(f);
            let out = g.map_columns(&c, g.nz(), |mode, col, o| {
                o.copy_from_slice(col);
                g.solve_helmholtz_column(1.0 + s * mu * g.k2(mode), s * nu, alpha, o);
            });
            g.to_physical(&out)
        };
        State {
            v: [solve(&u.v[0], p.mu_v, p.nu_v, 0.0), solve(&u.v[1], p.mu_v, p.nu_v, 0.0)],
            t: solve(&u.t, p.mu_t, p.nu_t, p.alpha),
        }
    }

    // ---- advection ------------------------------------------------------------

    /// `w(v) = -int_{-h}^z div v dz'` (cumulative trapezoid from the bottom).
    pub fn vertical_velocity(&self, v: &VectorField2) -> Vec<f64> {
        let g = &self.grid;
        let mut w = calc::cumulative_from_bottom(g, &calc::div(g, &v[0], &v[1]));
        for x in w.iter_mut() {
            *x = -*x;
        }
        w
    }

    /// Trilinear form `b(U, U#, Ub)` in skew-symmetric quadrature form.
    pub fn trilinear_b(&self, u: &State, us: &State, uf: &State) -> f64 {
        let g = &self.grid;
        let w = self.vertical_velocity(&u.v);
        let dv = calc::div(g, &u.v[0], &u.v[1]);
        let mut total = 0.0;
        for (b, c) in us.components().into_iter().zip(uf.components()) {
            let [bx, by] = calc::grad(g, b);
            let db = calc::dz(g, b);
            let dc = calc::dz(g, c);
            let mut adv = vec![0.0; g.len()];
            let mut vert = vec![0.0; g.len()];
            for i in 0..g.len() {
                adv[i] = u.v[0][i] * bx[i] + u.v[1][i] * by[i] + 0.5 * dv[i] * b[i];
                vert[i] = 0.5 * w[i] * (c[i] * db[i] - b[i] * dc[i]);
            }
            total += calc::dot3(g, &adv, c) + calc::dot3(g, &vert, &vec![1.0; g.len()]);
        }
        total
    }

    /// Pointwise advection `(v.grad) f + w d_z f` in the split form
    /// `(v.grad) f + 1/2 [w Dz f + Dz(w f) + f div v]`, for each component of `us`.
    pub fn advection_pointwise(&self, u: &State, us: &State) -> State {
        let g = &self.grid;
        let w = self.vertical_velocity(&u.v);
        let dv = calc::div(g, &u.v[0], &u.v[1]);
        us.map(|b| {
            let [bx, by] = calc::grad(g, b);
            let db = calc::dz(g, b);
            let dwb = calc::dz(g, &calc::mul(&w, b));
            (0..g.len())
                .map(|i| u.v[0][i] * bx[i] + u.v[1][i] * by[i] + 0.5 * (w[i] * db[i] + dwb[i] + b[i] * dv[i]))
                .collect()
        })
    }

    /// `B(U, U#)`: projected (and dealiased) advection.
    pub fn apply_b(&self, u: &State, us: &State) -> State {
        self.project(&self.advection_pointwise(u, us))
    }

    /// Adjoint of `d -> B(d, U)` on the state space, applied to `lam`.
    pub fn apply_b_first_adjoint(&self, u: &State, lam: &State) -> State {
        let g = &self.grid;
        let n = g.len();
        let mut g1 = [vec![0.0; n], vec![0.0; n]];
        let mut q = vec![0.0; n];
        let mut ul = vec![0.0; n];
        for (uc, lc) in u.components().into_iter().zip(lam.components()) {
            let [ux, uy] = calc::grad(g, uc);
            let du = calc::dz(g, uc);
            let dl = calc::dz(g, lc);
            for i in 0..n {
                g1[0][i] += lc[i] * ux[i];
                g1[1][i] += lc[i] * uy[i];
                q[i] += lc[i] * du[i] - uc[i] * dl[i];
                ul[i] += uc[i] * lc[i];
            }
        }
        let r = calc::cumulative_from_bottom_adjoint(g, &q);
        let s: Vec<f64> = r.iter().zip(&ul).map(|(a, b)| 0.5 * (a - b)).collect();
        let [sx, sy] = calc::grad(g, &s);
        let out = State { v: [calc::axpy(1.0, &sx, &g1[0]), calc::axpy(1.0, &sy, &g1[1])], t: vec![0.0; n] };
        self.project(&out)
    }

    // ---- lower-order terms ----------------------------------------------------

    /// `A_pr U = P_H(-beta_T g grad int_z^0 T dz', 0)`.
    pub fn apply_apr(&self, u: &State) -> State {
        let g = &self.grid;
        let mut out = State::zeros(g);
        if self.params.beta_t_g == 0.0 {
            return out;
        }
        let [gx, gy] = calc::grad(g, &calc::cumulative_from_top(g, &u.t));
        let c = -self.params.beta_t_g;
        out.v = [gx.iter().map(|x| c * x).collect(), gy.iter().map(|x| c * x).collect()];
        self.project_h(&out)
    }

    /// Adjoint of [`Model::apply_apr`] on the state space.
    pub fn apply_apr_adjoint(&self, lam: &State) -> State {
        let g = &self.grid;
        let mut out = State::zeros(g);
        if self.params.beta_t_g == 0.0 {
            return out;
        }
        let d = calc::div(g, &lam.v[0], &lam.v[1]);
        let c = self.params.beta_t_g;
        out.t = calc::cumulative_from_top_adjoint(g, &d).iter().map(|x| c * x).collect();
        self.truncate(&out)
    }

    /// `E U = P_H(f k x v, 0)`.
    pub fn apply_e(&self, u: &State) -> State {
        let f = self.params.f_cor;
        let mut out = State::zeros(&self.grid);
        if f == 0.0 {
            return out;
        }
        out.v = [u.v[1].iter().map(|x| -f * x).collect(), u.v[0].iter().map(|x| f * x).collect()];
        self.project_h(&out)
    }

    /// Exact flow of `dv/dt = -f k x v` over time `dt`: a pointwise rotation.
    pub fn rotate_coriolis(&self, u: &State, dt: f64) -> State {
        let theta = self.params.f_cor * dt;
        if theta == 0.0 {
            return u.clone();
        }
        let (s, c) = theta.sin_cos();
        let mut out = u.clone();
        for i in 0..self.grid.len() {
            let (a, b) = (u.v[0][i], u.v[1][i]);
            out.v[0][i] = c * a + s * b;
            out.v[1][i] = -s * a + c * b;
        }
        out
    }

    /// `F_U(t) = P_H(F_v, F_T)` on the state space.
    pub fn forcing(&self, forcing: &Forcing, t: f64) -> Option<State> {
        forcing.eval(t).map(|f| self.project(&f))
    }

    /// `F(U) = A_pr U + E U + F_U(t)`.
    pub fn apply_f(&self, u: &State, forcing: &Forcing, t: f64) -> State {
        let mut out = self.apply_apr(u);
        out.axpy(1.0, &self.apply_e(u));
        if let Some(f) = self.forcing(forcing, t) {
            out.axpy(1.0, &f);
        }
        out
    }

    /// `|F(U) - F(U#)| / ||U - U#||`, the empirical Lipschitz ratio of `F`.
    pub fn f_lipschitz_ratio(&self, u: &State, us: &State, forcing: &Forcing, t: f64) -> f64 {
        let d = &self.apply_f(u, forcing, t) - &self.apply_f(us, forcing, t);
        let diff = u - us;
        let den: f64 = diff.components().iter().map(|c| crate::norms::h1_sq(&self.grid, c)).sum::<f64>().sqrt();
        if den == 0.0 {
            0.0
        } else {
            d.norm2(&self.grid).sqrt() / den
        }
    }

    // ---- barotropic / baroclinic split ---------------------------------------

    pub fn split_barotropic(&self, v: &VectorField2) -> Split {
        let g = &self.grid;
        Split {
            vbar: [calc::vertical_mean(g, &v[0]), calc::vertical_mean(g, &v[1])],
            vtilde: [calc::remainder(g, &v[0]), calc::remainder(g, &v[1])],
        }
    }

    /// `B1(u, v) = (u.grad) v`.
    pub fn b1(&self, u: &VectorField2, v: &VectorField2) -> VectorField2 {
        let g = &self.grid;
        let comp = |f: &[f64]| -> Vec<f64> {
            let [fx, fy] = calc::grad(g, f);
            (0..f.len()).map(|i| u[0][i % u[0].len()] * fx[i] + u[1][i % u[1].len()] * fy[i]).collect()
        };
        [comp(&v[0]), comp(&v[1])]
    }

    /// `B2(u, v) = (u.grad) v + w(u) d_z v`.
    pub fn b2(&self, u: &VectorField2, v: &VectorField2) -> VectorField2 {
        let g = &self.grid;
        let w = self.vertical_velocity(u);
        let mut out = self.b1(u, v);
        for (o, f) in out.iter_mut().zip(v) {
            let fz = calc::dz(g, f);
            for i in 0..g.len() {
                o[i] += w[i] * fz[i];
            }
        }
        out
    }

    /// `J1(u, v) = A2[(ut.grad) vt + (div ut) vt]` (2D).
    pub fn interaction_j1(&self, u: &VectorField2, v: &VectorField2) -> VectorField2 {
        let g = &self.grid;
        let su = self.split_barotropic(u);
        let sv = self.split_barotropic(v);
        let adv = self.b1(&su.vtilde, &sv.vtilde);
        let d = calc::div(g, &su.vtilde[0], &su.vtilde[1]);
        let inner = |c: usize| -> Vec<f64> { (0..g.len()).map(|i| adv[c][i] + d[i] * sv.vtilde[c][i]).collect() };
        [calc::vertical_mean(g, &inner(0)), calc::vertical_mean(g, &inner(1))]
    }

    /// `J2(u, v) = (ut.grad) vbar - A3 J1(u, v)` (3D).
    pub fn interaction_j2(&self, u: &VectorField2, v: &VectorField2) -> VectorField2 {
        let g = &self.grid;
        let su = self.split_barotropic(u);
        let sv = self.split_barotropic(v);
        let vbar3 = [calc::extend(g, &sv.vbar[0]), calc::extend(g, &sv.vbar[1])];
        let adv = self.b1(&su.vtilde, &vbar3);
        let j1 = self.interaction_j1(u, v);
        let nxy = g.nxy();
        [
            (0..g.len()).map(|i| adv[0][i] - j1[0][i % nxy]).collect(),
            (0..g.len()).map(|i| adv[1][i] - j1[1][i % nxy]).collect(),
        ]
    }
}
