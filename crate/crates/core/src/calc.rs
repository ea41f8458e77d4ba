//! Spectral-horizontal / finite-difference-vertical calculus on physical arrays.
//!
//! Every function accepts arrays holding any whole number of horizontal levels
//! (a 2D field is a single level), except the vertical operators which need
//! `nz` levels.

use num_complex::Complex64;

use crate::grid::Grid;

/// Apply a horizontal Fourier multiplier `m(p)` to every level of `f`.
pub fn multiplier(grid: &Grid, f: &[f64], m: impl Fn(usize) -> Complex64) -> Vec<f64> {
    let nxy = grid.nxy();
    let mut c = grid.to_spectral(f);
    for level in c.chunks_mut(nxy) {
        for (p, z) in level.iter_mut().enumerate() {
            *z *= m(p);
        }
    }
    grid.to_physical(&c)
}

pub fn dx(grid: &Grid, f: &[f64]) -> Vec<f64> {
    multiplier(grid, f, |p| Complex64::new(0.0, grid.wavenumber(p).0))
}

pub fn dy(grid: &Grid, f: &[f64]) -> Vec<f64> {
    multiplier(grid, f, |p| Complex64::new(0.0, grid.wavenumber(p).1))
}

/// Horizontal gradient computed from a single forward transform.
pub fn grad(grid: &Grid, f: &[f64]) -> [Vec<f64>; 2] {
    let nxy = grid.nxy();
    let c = grid.to_spectral(f);
    let mut gx = c.clone();
    let mut gy = c;
    for (lx, ly) in gx.chunks_mut(nxy).zip(gy.chunks_mut(nxy)) {
        for p in 0..nxy {
            let (kx, ky) = grid.wavenumber(p);
            lx[p] *= Complex64::new(0.0, kx);
            ly[p] *= Complex64::new(0.0, ky);
        }
    }
    [grid.to_physical(&gx), grid.to_physical(&gy)]
}

pub fn div(grid: &Grid, v1: &[f64], v2: &[f64]) -> Vec<f64> {
    let nxy = grid.nxy();
    let mut a = grid.to_spectral(v1);
    let b = grid.to_spectral(v2);
    for (la, lb) in a.chunks_mut(nxy).zip(b.chunks(nxy)) {
        for p in 0..nxy {
            let (kx, ky) = grid.wavenumber(p);
            la[p] = la[p] * Complex64::new(0.0, kx) + lb[p] * Complex64::new(0.0, ky);
        }
    }
    grid.to_physical(&a)
}

/// Horizontal Laplacian.
pub fn lap_h(grid: &Grid, f: &[f64]) -> Vec<f64> {
    multiplier(grid, f, |p| Complex64::new(-grid.k2(p), 0.0))
}

/// Inverse horizontal Laplacian on mean-free data; the mean (and Nyquist) modes
/// are mapped to zero.
pub fn inv_lap_h(grid: &Grid, f: &[f64]) -> Vec<f64> {
    multiplier(grid, f, |p| {
        let k2 = grid.k2(p);
        if k2 > 0.0 {
            Complex64::new(-1.0 / k2, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Two-thirds truncation: keep `|kx| <= (nx-1)/3`, `|ky| <= (ny-1)/3`.
pub fn truncate(grid: &Grid, f: &[f64]) -> Vec<f64> {
    multiplier(grid, f, |p| if grid.kept(p) { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
}

/// Largest discarded-mode amplitude relative to the largest retained one.
pub fn band_excess(grid: &Grid, f: &[f64]) -> f64 {
    let nxy = grid.nxy();
    let c = grid.to_spectral(f);
    let (mut kept, mut dropped) = (0.0f64, 0.0f64);
    for level in c.chunks(nxy) {
        for (p, z) in level.iter().enumerate() {
            if grid.kept(p) {
                kept = kept.max(z.norm());
            } else {
                dropped = dropped.max(z.norm());
            }
        }
    }
    if kept == 0.0 {
        dropped
    } else {
        dropped / kept
    }
}

/// Column-wise summation-by-parts vertical derivative.
pub fn dz(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.dz_nodes(c, o))
}

/// Forward differences at cell midpoints (`nz - 1` levels).
pub fn dz_cells(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz() - 1, |_, c, o| grid.dz_cells(c, o))
}

/// `-d^2/dz^2` with Neumann bottom and Robin (`alpha`) top closures.
pub fn neg_dzz(grid: &Grid, f: &[f64], alpha: f64) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.neg_dzz(c, alpha, o))
}

/// `(1/h) int_{-h}^0 f dz` as a single 2D level.
pub fn vertical_mean(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let inv_h = 1.0 / grid.depth();
    grid.map_columns(f, 1, |_, c, o| o[0] = grid.integrate_column(c) * inv_h)
}

/// Vertical integral `int_{-h}^0 f dz` as a 2D level.
pub fn vertical_integral(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, 1, |_, c, o| o[0] = grid.integrate_column(c))
}

/// Constant-in-z extension of a 2D level.
pub fn extend(grid: &Grid, g: &[f64]) -> Vec<f64> {
    assert_eq!(g.len(), grid.nxy());
    let mut out = Vec::with_capacity(grid.len());
    for _ in 0..grid.nz() {
        out.extend_from_slice(g);
    }
    out
}

/// `f - extend(vertical_mean(f))`.
pub fn remainder(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let m = vertical_mean(grid, f);
    let nxy = grid.nxy();
    f.iter().enumerate().map(|(i, &x)| x - m[i % nxy]).collect()
}

pub fn cumulative_from_bottom(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.cumulative_from_bottom(c, o))
}

pub fn cumulative_from_top(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.cumulative_from_top(c, o))
}

pub fn cumulative_from_bottom_adjoint(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.cumulative_from_bottom_adjoint(c, o))
}

pub fn cumulative_from_top_adjoint(grid: &Grid, f: &[f64]) -> Vec<f64> {
    grid.map_columns(f, grid.nz(), |_, c, o| grid.cumulative_from_top_adjoint(c, o))
}

/// Quadrature inner product over the box (trapezoid in z).
pub fn dot3(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let nxy = grid.nxy();
    let w = grid.weights();
    let mut s = 0.0;
    for (k, (la, lb)) in a.chunks(nxy).zip(b.chunks(nxy)).enumerate() {
        let level: f64 = la.iter().zip(lb).map(|(x, y)| x * y).sum();
        s += w[k] * level;
    }
    s * grid.cell_area()
}

/// Quadrature inner product over the horizontal square.
pub fn dot2(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * grid.cell_area()
}

/// Pointwise product.
pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

/// `a * x + y` into a new vector.
pub fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(u, v)| a * u + v).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(Domain::new(2.0, 1.0, 16, 8, 5).unwrap()).unwrap()
    }

    fn sample(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; grid.len()];
        for k in 0..grid.nz() {
            for j in 0..grid.ny() {
                for i in 0..grid.nx() {
                    out[grid.idx(i, j, k)] = f(grid.x(i), grid.y(j), grid.z()[k]);
                }
            }
        }
        out
    }

    #[test]
    fn derivatives_of_trig_modes_are_exact() {
        let g = grid();
        let f = sample(&g, |x, y, z| (2.0 * PI * x / 2.0).sin() * (2.0 * PI * 2.0 * y / 2.0).cos() * (1.0 + z));
        let fx = dx(&g, &f);
        let fy = dy(&g, &f);
        let ex = sample(&g, |x, y, z| PI * (PI * x).cos() * (2.0 * PI * y).cos() * (1.0 + z));
        let ey = sample(&g, |x, y, z| -2.0 * PI * (PI * x).sin() * (2.0 * PI * y).sin() * (1.0 + z));
        for i in 0..g.len() {
            assert!((fx[i] - ex[i]).abs() < 1e-12);
            assert!((fy[i] - ey[i]).abs() < 1e-12);
        }
        let lap = lap_h(&g, &f);
        let back = inv_lap_h(&g, &lap);
        for i in 0..g.len() {
            assert!((back[i] - f[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_derivative_is_skew() {
        let g = grid();
        let a = sample(&g, |x, y, z| (x * 3.1).sin() + y * y * 0.1 + z);
        let b = sample(&g, |x, y, _| (x + y).cos().exp());
        let lhs = dot3(&g, &dx(&g, &a), &b);
        let rhs = -dot3(&g, &a, &dx(&g, &b));
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn averaging_decomposition() {
        let g = grid();
        let f = sample(&g, |x, y, z| x.sin() + z * z * y.cos());
        let r = remainder(&g, &f);
        let m = vertical_mean(&g, &r);
        assert!(m.iter().all(|v| v.abs() < 1e-14));
        let e = extend(&g, &vertical_mean(&g, &f));
        for i in 0..g.len() {
            assert_eq!(e[i] + r[i], e[i] + (f[i] - e[i]));
        }
    }
}
