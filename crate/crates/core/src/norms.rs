//! Quadrature norms: Lebesgue, Sobolev and anisotropic `L^q_x L^p_z`.
//!
//! `L^inf` is the maximum over grid nodes, i.e. a lower bound for the
//! continuum norm.

use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::GridError;
use crate::field::Components;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    L2,
    H1,
    H2,
    /// `p = f64::INFINITY` selects the grid max.
    Lp { p: f64 },
    /// `(int_{M0} (int_{-h}^0 sum_i |f_i|^p dz)^{q/p} dM0)^{1/q}`, components summed
    /// inside the vertical integral.
    Aniso { q: f64, p: f64 },
}

pub fn norm<F: Components + ?Sized>(grid: &Grid, f: &F, kind: NormKind) -> Result<f64, GridError> {
    let comps = f.components();
    for c in &comps {
        if c.len() != grid.len() {
            return Err(GridError::ShapeMismatch { expected: grid.len(), found: c.len() });
        }
        if let Some(index) = c.iter().position(|x| !x.is_finite()) {
            return Err(GridError::NonFinite { what: "norm argument", index });
        }
    }
    Ok(match kind {
        NormKind::L2 => comps.iter().map(|c| calc::dot3(grid, c, c)).sum::<f64>().sqrt(),
        NormKind::H1 => comps.iter().map(|c| h1_sq(grid, c)).sum::<f64>().sqrt(),
        NormKind::H2 => comps.iter().map(|c| h2_sq(grid, c)).sum::<f64>().sqrt(),
        NormKind::Lp { p } => lp(grid, &comps, p)?,
        NormKind::Aniso { q, p } => aniso(grid, &comps, q, p)?,
    })
}

fn check_exponent(p: f64) -> Result<(), GridError> {
    if p.is_nan() || p < 1.0 {
        return Err(GridError::InvalidNorm(format!("exponent must lie in [1, inf], got {p}")));
    }
    Ok(())
}

/// `|grad_h f|^2` in `L^2`.
pub fn grad_sq(grid: &Grid, f: &[f64]) -> f64 {
    let [gx, gy] = calc::grad(grid, f);
    calc::dot3(grid, &gx, &gx) + calc::dot3(grid, &gy, &gy)
}

/// `|d_z f|^2` from the cell differences (the Dirichlet form of the vertical operator).
pub fn dz_sq(grid: &Grid, f: &[f64]) -> f64 {
    let cells = calc::dz_cells(grid, f);
    cells.iter().map(|x| x * x).sum::<f64>() * grid.dz() * grid.cell_area()
}

pub fn h1_sq(grid: &Grid, f: &[f64]) -> f64 {
    calc::dot3(grid, f, f) + grad_sq(grid, f) + dz_sq(grid, f)
}

pub fn h2_sq(grid: &Grid, f: &[f64]) -> f64 {
    let lap = calc::lap_h(grid, f);
    let cells = calc::dz_cells(grid, f);
    let [gx, gy] = calc::grad(grid, &cells);
    let mixed = (gx.iter().map(|x| x * x).sum::<f64>() + gy.iter().map(|x| x * x).sum::<f64>())
        * grid.dz()
        * grid.cell_area();
    let zz = calc::neg_dzz(grid, f, 0.0);
    h1_sq(grid, f) + calc::dot3(grid, &lap, &lap) + 2.0 * mixed + calc::dot3(grid, &zz, &zz)
}

fn lp(grid: &Grid, comps: &[&[f64]], p: f64) -> Result<f64, GridError> {
    check_exponent(p)?;
    let nxy = grid.nxy();
    let mag2 = |i: usize| comps.iter().map(|c| c[i] * c[i]).sum::<f64>();
    if p.is_infinite() {
        return Ok((0..grid.len()).map(|i| mag2(i).sqrt()).fold(0.0, f64::max));
    }
    let w = grid.weights();
    let s: f64 = (0..grid.len()).map(|i| w[i / nxy] * mag2(i).powf(0.5 * p)).sum();
    Ok((s * grid.cell_area()).powf(1.0 / p))
}

fn aniso(grid: &Grid, comps: &[&[f64]], q: f64, p: f64) -> Result<f64, GridError> {
    check_exponent(q)?;
    check_exponent(p)?;
    let nxy = grid.nxy();
    let w = grid.weights();
    let mut inner = vec![0.0; nxy];
    for (col, slot) in inner.iter_mut().enumerate() {
        *slot = if p.is_infinite() {
            (0..grid.nz())
                .flat_map(|k| comps.iter().map(move |c| c[k * nxy + col].abs()))
                .fold(0.0, f64::max)
        } else {
            let s: f64 = (0..grid.nz())
                .map(|k| w[k] * comps.iter().map(|c| c[k * nxy + col].abs().powf(p)).sum::<f64>())
                .sum();
            s.powf(1.0 / p)
        };
    }
    if q.is_infinite() {
        return Ok(inner.iter().cloned().fold(0.0, f64::max));
    }
    let s: f64 = inner.iter().map(|x| x.powf(q)).sum();
    Ok((s * grid.cell_area()).powf(1.0 / q))
}

/// `max_z |f(., z)|_{L^2(M0)}` over grid levels.
pub fn sup_z_l2x<F: Components + ?Sized>(grid: &Grid, f: &F) -> f64 {
    let nxy = grid.nxy();
    let worst = (0..grid.nz())
        .map(|k| {
            f.components()
                .iter()
                .map(|c| c[k * nxy..(k + 1) * nxy].iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    (worst * grid.cell_area()).sqrt()
}
