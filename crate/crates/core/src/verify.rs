//! Property checks: operator identities, ratio stability of the anisotropic
//! and trilinear estimates under grid refinement, and a Monte Carlo harness
//! for the uniform stochastic Gronwall lemma.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::CoreError;
use crate::exec::{self, Execution};
use crate::field::{Components, State};
use crate::grid::{Domain, Grid};
use crate::norms::{self, NormKind};
use crate::operators::{Model, PhysicalParams};

/// Spectral content of random smooth fields. The coefficients depend only on
/// `(seed, sample)` and the band, never on the grid, so the same field can be
/// sampled at several resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBand {
    /// Largest horizontal wavenumber index.
    pub k_max: i32,
    /// Largest vertical cosine index.
    pub n_max: u32,
    /// Envelope `(1 + |k|^2 + n^2)^(-decay)`.
    pub decay: f64,
}

impl FieldBand {
    /// Band whose cubes are still resolved without aliasing on an `n`-point grid.
    pub fn cubic_safe(n: usize) -> Self {
        Self { k_max: ((n as i32) / 6).max(1), n_max: 2, decay: 1.0 }
    }

    /// Everything the two-thirds rule keeps on an `n`-point grid.
    pub fn dealiased(n: usize) -> Self {
        Self { k_max: ((n as i32) - 1) / 3, n_max: 3, decay: 1.0 }
    }
}

struct Coefficient {
    kx: i32,
    ky: i32,
    n: u32,
    a: f64,
    b: f64,
}

fn draw_coefficients(rng: &mut ChaCha20Rng, band: FieldBand) -> Vec<Coefficient> {
    let mut out = Vec::new();
    for kx in 0..=band.k_max {
        for ky in -band.k_max..=band.k_max {
            if kx == 0 && ky < 0 {
                continue;
            }
            for n in 0..=band.n_max {
                let env = (1.0 + (kx * kx + ky * ky) as f64 + (n * n) as f64).powf(-band.decay);
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let b = if kx == 0 && ky == 0 { 0.0 } else { b };
                out.push(Coefficient { kx, ky, n, a: env * a, b: env * b });
            }
        }
    }
    out
}

fn synthesize(grid: &Grid, coeffs: &[Coefficient]) -> Vec<f64> {
    let (l, h) = (grid.length(), grid.depth());
    let mut out = vec![0.0; grid.len()];
    for k in 0..grid.nz() {
        let z = grid.z()[k];
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                let x = grid.x(i);
                let mut s = 0.0;
                for c in coeffs {
                    let ph = 2.0 * PI * (c.kx as f64 * x + c.ky as f64 * y) / l;
                    let vz = (c.n as f64 * PI * (z + h) / h).cos();
                    s += (c.a * ph.cos() + c.b * ph.sin()) * vz;
                }
                out[grid.idx(i, j, k)] = s;
            }
        }
    }
    out
}

fn sample_rng(seed: u64, sample: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    rng
}

/// Random smooth scalar field number `sample`.
pub fn random_scalar(grid: &Grid, seed: u64, sample: u64, band: FieldBand) -> Vec<f64> {
    let mut rng = sample_rng(seed, sample);
    synthesize(grid, &draw_coefficients(&mut rng, band))
}

/// Random smooth state number `sample` (not projected).
pub fn random_state(grid: &Grid, seed: u64, sample: u64, band: FieldBand) -> State {
    let mut rng = sample_rng(seed, sample);
    let v1 = synthesize(grid, &draw_coefficients(&mut rng, band));
    let v2 = synthesize(grid, &draw_coefficients(&mut rng, band));
    let t = synthesize(grid, &draw_coefficients(&mut rng, band));
    State { v: [v1, v2], t }
}

// ---- identities -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    /// Largest relative defect over the samples.
    pub max_defect: f64,
    /// Sample attaining it.
    pub worst_sample: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub nx: usize,
    pub nz: usize,
    pub n_samples: usize,
    pub tolerance: f64,
    pub checks: Vec<IdentityCheck>,
    pub pass: bool,
}

const IDENTITIES: [&str; 8] = [
    "b_antisymmetry",
    "b_cancellation",
    "coriolis_orthogonality",
    "projection_idempotent",
    "projection_self_adjoint",
    "average_of_remainder",
    "w_bottom",
    "w_surface",
];

fn rel(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a.abs() / scale
    } else {
        a.abs()
    }
}

fn h1(model: &Model, u: &State) -> f64 {
    crate::dynamics::v_norm2(model, u).sqrt()
}

/// Relative defects of every identity on sample `i` (order of [`IDENTITIES`]).
pub fn identity_defects(model: &Model, seed: u64, i: u64, band: FieldBand) -> [f64; 8] {
    let g = &model.grid;
    let raw_a = random_state(g, seed, 3 * i, band);
    let raw_b = random_state(g, seed, 3 * i + 1, band);
    let raw_c = random_state(g, seed, 3 * i + 2, band);
    let u = model.project(&raw_a);
    let us = model.project(&raw_b);
    let uf = model.project(&raw_c);
    let (nu, nus, nuf) = (h1(model, &u), h1(model, &us), h1(model, &uf));
    let mut d = [0.0; 8];
    d[0] = rel(model.trilinear_b(&u, &us, &uf) + model.trilinear_b(&u, &uf, &us), nu * nus * nuf);
    d[1] = rel(model.trilinear_b(&u, &us, &us), nu * nus * nus);
    d[2] = rel(model.apply_e(&u).dot(g, &u), u.norm2(g));
    let p = model.project_h(&raw_a);
    d[3] = (&model.project_h(&p) - &p).norm2(g).sqrt() / raw_a.norm2(g).sqrt().max(1e-300);
    let lhs = model.project_h(&raw_a).dot(g, &raw_b);
    let rhs = raw_a.dot(g, &model.project_h(&raw_b));
    d[4] = rel(lhs - rhs, (raw_a.norm2(g) * raw_b.norm2(g)).sqrt());
    let mut avg = 0.0f64;
    for c in &raw_a.v {
        let m = calc::vertical_mean(g, &calc::remainder(g, c));
        let scale = calc::dot3(g, c, c).sqrt().max(1e-300);
        avg = avg.max(m.iter().fold(0.0f64, |a, x| a.max(x.abs())) / scale);
    }
    d[5] = avg;
    let w_raw = model.vertical_velocity(&raw_a.v);
    let w = model.vertical_velocity(&u.v);
    let nxy = g.nxy();
    let top = (g.nz() - 1) * nxy;
    let w_scale = |w: &[f64]| w.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-300);
    d[6] = w_raw[..nxy].iter().fold(0.0f64, |a, x| a.max(x.abs())) / w_scale(&w_raw);
    d[7] = w[top..].iter().fold(0.0f64, |a, x| a.max(x.abs())) / w_scale(&w);
    d
}

/// Operator identities on `n_samples` random states.
pub fn check_identities(model: &Model, n_samples: usize, seed: u64, tolerance: f64, exec: Execution) -> IdentityReport {
    let g = &model.grid;
    let band = FieldBand::dealiased(g.nx().min(g.ny()));
    let defects = exec::map_range(exec, n_samples, |i| identity_defects(model, seed, i as u64, band));
    let checks: Vec<IdentityCheck> = IDENTITIES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (worst_sample, max_defect) =
                defects.iter().enumerate().map(|(i, d)| (i as u64, d[k])).fold((0, 0.0f64), |acc, x| if x.1 > acc.1 { x } else { acc });
            IdentityCheck { name: name.to_string(), max_defect, worst_sample, pass: max_defect <= tolerance }
        })
        .collect();
    let pass = checks.iter().all(|c| c.pass);
    IdentityReport { nx: g.nx(), nz: g.nz(), n_samples, tolerance, checks, pass }
}

// ---- estimate ratios --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateCase {
    /// `|f|_{L^q_x L^2_z} <= C |f|^{2/q} ||f||^{1-2/q}`, `q = 4`.
    Anis1,
    /// `|f|_{L^q_x L^2_z} <= C |f|_{L^6}^{6/q} ||f^3||^{1/3-2/q}`, `q = 8`.
    Anis2,
    /// `sup_z |f(., z)|_{L^2} <= C |f|^{1/2} ||f||^{1/2}`.
    Anis3,
    /// `|f^5|_{L^3_x L^2_z} <= C |f|_{L^6} ||f^3||^{4/3}`.
    Anis4,
    /// `|f^2|_{L^4_x L^3_z} <= C |f|_{L^6}^{3/2} ||f^3||^{1/6}`.
    Anis5,
    /// `|b(U, U#, Ub)| <= C ||U|| ||U#||_{H^2} ||Ub||`.
    B1,
    /// `|b| <= C (|v|_{L^6} ||U#||^{1/2} ||U#||_{H^2}^{1/2} + ||v||^{1/2} ||v||_{H^2}^{1/2} |dz U#|^{1/2} ||dz U#||^{1/2}) |Ub|`.
    BL6,
    /// `|b| <= C ||U||^{1/2} ||U||_{H^2}^{1/2} ||U#||^{1/2} ||U#||_{H^2}^{1/2} |Ub|`.
    B2,
    /// `|b| <= C ||v|| ||U#||^{1/2} ||U#||_{H^2}^{1/2} |Ub|^{1/2} ||Ub||^{1/2}`.
    B3,
}

impl EstimateCase {
    pub const ANISOTROPIC: [EstimateCase; 5] = [Self::Anis1, Self::Anis2, Self::Anis3, Self::Anis4, Self::Anis5];
    pub const TRILINEAR: [EstimateCase; 4] = [Self::B1, Self::BL6, Self::B2, Self::B3];
}

fn l2(g: &Grid, f: &[f64]) -> f64 {
    calc::dot3(g, f, f).sqrt()
}

fn h1s(g: &Grid, f: &[f64]) -> f64 {
    norms::h1_sq(g, f).sqrt()
}

fn nrm(g: &Grid, f: &[f64], kind: NormKind) -> f64 {
    norms::norm(g, f, kind).expect("finite random field")
}

fn pow_field(f: &[f64], p: i32) -> Vec<f64> {
    f.iter().map(|x| x.powi(p)).collect()
}

/// `(LHS, RHS)` of an anisotropic estimate for a scalar field (constant 1).
pub fn anisotropic_sides(g: &Grid, case: EstimateCase, f: &[f64]) -> (f64, f64) {
    let l2f = l2(g, f);
    let h1f = h1s(g, f);
    let l6 = || nrm(g, f, NormKind::Lp { p: 6.0 });
    let cube_h1 = || h1s(g, &pow_field(f, 3));
    match case {
        EstimateCase::Anis1 => (nrm(g, f, NormKind::Aniso { q: 4.0, p: 2.0 }), l2f.powf(0.5) * h1f.powf(0.5)),
        EstimateCase::Anis2 => (nrm(g, f, NormKind::Aniso { q: 8.0, p: 2.0 }), l6().powf(0.75) * cube_h1().powf(1.0 / 3.0 - 0.25)),
        EstimateCase::Anis3 => (norms::sup_z_l2x(g, f), (l2f * h1f).sqrt()),
        EstimateCase::Anis4 => (nrm(g, &pow_field(f, 5), NormKind::Aniso { q: 3.0, p: 2.0 }), l6() * cube_h1().powf(4.0 / 3.0)),
        EstimateCase::Anis5 => (nrm(g, &pow_field(f, 2), NormKind::Aniso { q: 4.0, p: 3.0 }), l6().powf(1.5) * cube_h1().powf(1.0 / 6.0)),
        _ => panic!("not an anisotropic case"),
    }
}

fn state_norm(model: &Model, u: &State, f: impl Fn(&Grid, &[f64]) -> f64) -> f64 {
    u.components().iter().map(|c| f(&model.grid, c).powi(2)).sum::<f64>().sqrt()
}

/// `(LHS, RHS)` of a trilinear estimate (constant 1).
pub fn trilinear_sides(model: &Model, case: EstimateCase, u: &State, us: &State, uf: &State) -> (f64, f64) {
    let g = &model.grid;
    let lhs = model.trilinear_b(u, us, uf).abs();
    let v_only = |s: &State| State { v: s.v.clone(), t: vec![0.0; g.len()] };
    let h1n = |s: &State| state_norm(model, s, |g, c| h1s(g, c));
    let h2n = |s: &State| state_norm(model, s, |g, c| norms::h2_sq(g, c).sqrt());
    let l2n = |s: &State| s.norm2(g).sqrt();
    let rhs = match case {
        EstimateCase::B1 => h1n(u) * h2n(us) * h1n(uf),
        EstimateCase::BL6 => {
            let v = v_only(u);
            let l6 = norms::norm(g, &v.v, NormKind::Lp { p: 6.0 }).expect("finite");
            let dz = us.map(|c| calc::dz(g, c));
            (l6 * (h1n(us) * h2n(us)).sqrt() + (h1n(&v) * h2n(&v)).sqrt() * (l2n(&dz) * h1n(&dz)).sqrt()) * l2n(uf)
        }
        EstimateCase::B2 => (h1n(u) * h2n(u) * h1n(us) * h2n(us)).sqrt() * l2n(uf),
        EstimateCase::B3 => h1n(&v_only(u)) * (h1n(us) * h2n(us) * l2n(uf) * h1n(uf)).sqrt(),
        _ => panic!("not a trilinear case"),
    };
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub case: EstimateCase,
    /// Largest `LHS / RHS` at each resolution, coarse first.
    pub max_ratio: Vec<f64>,
    /// `|fine - coarse| / coarse`.
    pub rel_change: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub case: EstimateCase,
    pub nx: usize,
    pub sample: u64,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    /// Horizontal points per side at each level.
    pub resolutions: Vec<usize>,
    /// Vertical nodes at each level.
    pub nz_levels: Vec<usize>,
    pub n_samples: usize,
    pub max_growth: f64,
    pub rows: Vec<RatioRow>,
    pub counterexamples: Vec<Counterexample>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioStudy {
    pub length: f64,
    pub depth: f64,
    pub coarse: usize,
    pub nz: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Allowed relative change of the max ratio under one refinement.
    pub max_growth: f64,
    /// `LHS` above this with `RHS = 0` is a counterexample.
    pub zero_tol: f64,
}

impl Default for RatioStudy {
    fn default() -> Self {
        Self { length: 2.0 * PI, depth: 1.0, coarse: 16, nz: 17, n_samples: 200, seed: 11, max_growth: 0.1, zero_tol: 1e-12 }
    }
}

fn ratio(lhs: f64, rhs: f64) -> Option<f64> {
    if rhs > 0.0 {
        Some(lhs / rhs)
    } else {
        None
    }
}

fn model_at(study: &RatioStudy, n: usize, nz: usize) -> Result<Model, CoreError> {
    let g = Grid::new(Domain::new(study.length, study.depth, n, n, nz)?)?;
    Model::new(g, PhysicalParams::default())
}

/// Max `LHS/RHS` of each case at the coarse grid and at twice its resolution
/// (in every direction; fine vertical nodes contain the coarse ones).
pub fn check_estimates(study: &RatioStudy, cases: &[EstimateCase], exec: Execution) -> Result<RatioReport, CoreError> {
    if study.n_samples < 50 {
        return Err(CoreError::InvalidInput("at least 50 samples are needed".into()));
    }
    let band = FieldBand::cubic_safe(study.coarse);
    let resolutions = vec![study.coarse, 2 * study.coarse];
    let nz_levels = vec![study.nz, 2 * study.nz - 1];
    let mut table = vec![vec![0.0f64; resolutions.len()]; cases.len()];
    let mut counterexamples = Vec::new();
    for (r, &n) in resolutions.iter().enumerate() {
        let model = model_at(study, n, nz_levels[r])?;
        let g = &model.grid;
        let per_sample = exec::map_range(exec, study.n_samples, |i| {
            let i = i as u64;
            let u = model.project(&random_state(g, study.seed, 3 * i, band));
            let us = model.project(&random_state(g, study.seed, 3 * i + 1, band));
            let uf = model.project(&random_state(g, study.seed, 3 * i + 2, band));
            cases
                .iter()
                .map(|&case| match case {
                    EstimateCase::Anis1 | EstimateCase::Anis2 | EstimateCase::Anis3 | EstimateCase::Anis4 | EstimateCase::Anis5 => {
                        // scalar components of the velocity and temperature
                        let mut lhs_max = (0.0, 0.0);
                        let mut best: Option<f64> = None;
                        for c in u.components() {
                            let (l, rr) = anisotropic_sides(g, case, c);
                            match ratio(l, rr) {
                                Some(x) => best = Some(best.map_or(x, |b: f64| b.max(x))),
                                None => lhs_max = (l, rr),
                            }
                        }
                        (best, lhs_max.0)
                    }
                    _ => {
                        let (l, rr) = trilinear_sides(&model, case, &u, &us, &uf);
                        (ratio(l, rr), l)
                    }
                })
                .collect::<Vec<_>>()
        });
        for (i, row) in per_sample.iter().enumerate() {
            for (k, &(rt, lhs)) in row.iter().enumerate() {
                match rt {
                    Some(x) => table[k][r] = table[k][r].max(x),
                    None if lhs > study.zero_tol => counterexamples.push(Counterexample { case: cases[k], nx: n, sample: i as u64, lhs }),
                    None => {}
                }
            }
        }
    }
    let rows: Vec<RatioRow> = cases
        .iter()
        .zip(table)
        .map(|(&case, max_ratio)| {
            let rel_change = if max_ratio[0] > 0.0 { (max_ratio[1] - max_ratio[0]).abs() / max_ratio[0] } else { 0.0 };
            RatioRow { case, pass: rel_change <= study.max_growth, max_ratio, rel_change }
        })
        .collect();
    let pass = rows.iter().all(|r| r.pass) && counterexamples.is_empty();
    Ok(RatioReport { resolutions, nz_levels, n_samples: study.n_samples, max_growth: study.max_growth, rows, counterexamples, pass })
}

/// The five anisotropic mixed-norm cases only.
pub fn check_anisotropic(study: &RatioStudy, exec: Execution) -> Result<RatioReport, CoreError> {
    check_estimates(study, &EstimateCase::ANISOTROPIC, exec)
}

/// Trilinear-form cases only.
pub fn check_b_estimates(study: &RatioStudy, exec: Execution) -> Result<RatioReport, CoreError> {
    check_estimates(study, &EstimateCase::TRILINEAR, exec)
}

// ---- uniform stochastic Gronwall --------------------------------------------

/// Synthetic nonnegative processes on a uniform grid:
///
/// ```text
/// X_{n+1} = X_n + dt (R_n X_n + Z_n - Y_n),   Y_n = y X_n,
/// R_n = |r0 + sqrt(eps) xi_n|,                Z_n = z0 |1 + sqrt(eps) zeta_n|,
/// X_0 = exp(x0_sigma N(0,1)).
/// ```
///
/// Summing the recursion gives the hypothesis with `C0 = 2` on every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GronwallScenario {
    pub r0: f64,
    pub z0: f64,
    pub y: f64,
    pub x0_sigma: f64,
    pub c0: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Level of the `R` localization used for the inequality.
    pub k_r: f64,
    pub eps_list: Vec<f64>,
    pub k_list: Vec<f64>,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for GronwallScenario {
    fn default() -> Self {
        Self {
            r0: 1.0,
            z0: 0.5,
            y: 0.5,
            x0_sigma: 1.5,
            c0: 2.0,
            dt: 0.01,
            t_end: 1.0,
            k_r: 4.0,
            eps_list: vec![1.0, 0.1, 0.01],
            k_list: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            n_paths: 1000,
            seed: 5,
        }
    }
}

struct Path {
    x: Vec<f64>,
    y: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
}

impl GronwallScenario {
    fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    fn path(&self, eps: f64, p: usize) -> Path {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(p as u64);
        let n = self.n_steps();
        let s = eps.sqrt();
        let x0: f64 = (self.x0_sigma * rng.sample::<f64, _>(StandardNormal)).exp();
        let mut path = Path { x: vec![x0], y: Vec::with_capacity(n), r: Vec::with_capacity(n), z: Vec::with_capacity(n) };
        for i in 0..n {
            let xi: f64 = rng.sample(StandardNormal);
            let zeta: f64 = rng.sample(StandardNormal);
            let xn = path.x[i];
            let r = (self.r0 + s * xi).abs();
            let z = self.z0 * (1.0 + s * zeta).abs();
            let y = self.y * xn;
            path.r.push(r);
            path.z.push(z);
            path.y.push(y);
            path.x.push(xn + self.dt * (r * xn + z - y));
        }
        path
    }

    /// Largest `(sup_[a,b] X + int_a^b Y) / (X_a + int_a^b (R X + Z))` over all grid pairs.
    fn hypothesis_ratio(&self, path: &Path) -> f64 {
        let n = path.r.len();
        let mut worst = 0.0f64;
        for a in 0..=n {
            let mut sup = path.x[a];
            let mut int_y = 0.0;
            let mut int_rhs = 0.0;
            for b in a..=n {
                if b > a {
                    int_y += self.dt * path.y[b - 1];
                    int_rhs += self.dt * (path.r[b - 1] * path.x[b - 1] + path.z[b - 1]);
                    sup = sup.max(path.x[b]);
                }
                let rhs = path.x[a] + int_rhs;
                if rhs > 0.0 {
                    worst = worst.max((sup + int_y) / rhs);
                }
            }
        }
        worst
    }

    fn validate(&self) -> Result<(), CoreError> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || self.n_paths == 0 || self.eps_list.is_empty() {
            return Err(CoreError::InvalidInput("scenario needs dt, t_end, paths and eps values".into()));
        }
        if self.dt * self.y >= 1.0 || self.y < 0.0 || self.r0 < 0.0 || self.z0 < 0.0 {
            return Err(CoreError::InvalidScenario("generated processes would not stay nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallEpsRow {
    pub eps: f64,
    pub lhs_mean: f64,
    pub rhs_mean: f64,
    pub ratio: f64,
    /// `P(tau_K^X <= t)` for each `K` of the sweep.
    pub p_exceed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallReport {
    pub rows: Vec<GronwallEpsRow>,
    /// Largest ratio over the eps grid: the fitted eps-independent constant.
    pub fitted_c: f64,
    /// `max ratio / min ratio` over the eps grid.
    pub ratio_spread: f64,
    /// `exp(C0 K_R)`, the bound implied by the lemma's proof.
    pub exp_bound: f64,
    pub k_list: Vec<f64>,
    /// `max_eps P(tau_K^X <= t)` per `K`.
    pub max_p: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Largest hypothesis ratio seen (must not exceed `C0`).
    pub hypothesis_max: f64,
}

/// Monte Carlo check of the uniform stochastic Gronwall lemma. With
/// `hypothesis_check` every path is tested against the hypothesis first and a
/// single violation rejects the whole scenario.
pub fn check_gronwall(sc: &GronwallScenario, hypothesis_check: bool, exec: Execution) -> Result<GronwallReport, CoreError> {
    sc.validate()?;
    let n = sc.n_steps();
    let mut rows = Vec::new();
    let mut hyp_max = 0.0f64;
    for &eps in &sc.eps_list {
        let per_path = exec::map_range(exec, sc.n_paths, |p| {
            let path = sc.path(eps, p);
            let hyp = if hypothesis_check { sc.hypothesis_ratio(&path) } else { 0.0 };
            // localized at tau_K^R
            let mut int_r = 0.0;
            let mut sup = path.x[0];
            let mut int_y = 0.0;
            let mut int_z = 0.0;
            for i in 0..n {
                if int_r >= sc.k_r {
                    break;
                }
                int_r += sc.dt * path.r[i];
                int_y += sc.dt * path.y[i];
                int_z += sc.dt * path.z[i];
                sup = sup.max(path.x[i + 1]);
            }
            // first-passage levels of sup X + int Y without localization
            let mut running_sup = path.x[0];
            let mut running_y = 0.0;
            let mut level_max = running_sup;
            for i in 0..n {
                running_y += sc.dt * path.y[i];
                running_sup = running_sup.max(path.x[i + 1]);
                level_max = level_max.max(running_sup + running_y);
            }
            (hyp, sup + int_y, path.x[0] + int_z, level_max)
        });
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut exceed = vec![0usize; sc.k_list.len()];
        for &(hyp, l, r, level) in &per_path {
            if hypothesis_check && hyp > sc.c0 * (1.0 + 1e-12) {
                return Err(CoreError::InvalidScenario(format!(
                    "hypothesis fails with C0 = {} (ratio {hyp}) at eps = {eps}",
                    sc.c0
                )));
            }
            hyp_max = hyp_max.max(hyp);
            lhs += l;
            rhs += r;
            for (k, &kk) in sc.k_list.iter().enumerate() {
                if level >= kk {
                    exceed[k] += 1;
                }
            }
        }
        let np = sc.n_paths as f64;
        rows.push(GronwallEpsRow {
            eps,
            lhs_mean: lhs / np,
            rhs_mean: rhs / np,
            ratio: lhs / rhs,
            p_exceed: exceed.iter().map(|&c| c as f64 / np).collect(),
        });
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let fitted_c = ratios.iter().cloned().fold(0.0, f64::max);
    let min_ratio = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_p: Vec<f64> = (0..sc.k_list.len()).map(|k| rows.iter().map(|r| r.p_exceed[k]).fold(0.0, f64::max)).collect();
    let strictly_decreasing = max_p.windows(2).all(|w| w[1] < w[0]);
    Ok(GronwallReport {
        rows,
        fitted_c,
        ratio_spread: fitted_c / min_ratio,
        exp_bound: (sc.c0 * sc.k_r).exp(),
        k_list: sc.k_list.clone(),
        max_p,
        strictly_decreasing,
        hypothesis_max: hyp_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_fields_do_not_depend_on_resolution() {
        let band = FieldBand::cubic_safe(16);
        let g1 = Grid::new(Domain::new(2.0 * PI, 1.0, 16, 16, 5).unwrap()).unwrap();
        let g2 = Grid::new(Domain::new(2.0 * PI, 1.0, 32, 32, 5).unwrap()).unwrap();
        let a = random_scalar(&g1, 3, 4, band);
        let b = random_scalar(&g2, 3, 4, band);
        // coarse nodes are every other fine node
        for k in 0..5 {
            for j in 0..16 {
                for i in 0..16 {
                    assert!((a[g1.idx(i, j, k)] - b[g2.idx(2 * i, 2 * j, k)]).abs() < 1e-12);
                }
            }
        }
        assert_ne!(random_scalar(&g1, 3, 5, band), a);
    }

    #[test]
    fn zero_field_gives_zero_sides() {
        let g = Grid::new(Domain::new(1.0, 1.0, 8, 8, 5).unwrap()).unwrap();
        let z = vec![0.0; g.len()];
        for case in EstimateCase::ANISOTROPIC {
            assert_eq!(anisotropic_sides(&g, case, &z), (0.0, 0.0));
        }
    }

    #[test]
    fn hypothesis_holds_with_two_and_fails_with_one() {
        let sc = GronwallScenario { n_paths: 20, eps_list: vec![1.0], ..Default::default() };
        let r = check_gronwall(&sc, true, Execution::Sequential).unwrap();
        assert!(r.hypothesis_max <= 2.0);
        let bad = GronwallScenario { c0: 1.0, ..sc };
        assert!(matches!(check_gronwall(&bad, true, Execution::Sequential), Err(CoreError::InvalidScenario(_))));
    }
}
