//! Computational box `(0,L)^2 x (-h,0)`: horizontal Fourier grid, uniform
//! vertical nodes and the discrete vertical operators shared by every module.
//!
//! Storage layout for every 3D array is level-major: `idx = (k * ny + j) * nx + i`
//! with `k` the vertical node (k = 0 at the bottom `z = -h`, k = nz - 1 at the
//! surface `z = 0`). Spectral arrays use the same layout with `(j, i)` replaced
//! by the DFT indices `(ky, kx)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::GridError;

/// Geometry and resolution of the periodic-lateral box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    /// Horizontal side `L`.
    pub length: f64,
    /// Depth `h`.
    pub depth: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Domain {
    pub fn new(length: f64, depth: f64, nx: usize, ny: usize, nz: usize) -> Result<Self, GridError> {
        let d = Self { length, depth, nx, ny, nz };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(GridError::InvalidDomain(format!("length must be positive, got {}", self.length)));
        }
        if !(self.depth.is_finite() && self.depth > 0.0) {
            return Err(GridError::InvalidDomain(format!("depth must be positive, got {}", self.depth)));
        }
        for (name, n) in [("nx", self.nx), ("ny", self.ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(GridError::InvalidDomain(format!("{name} must be even and >= 4, got {n}")));
            }
        }
        if self.nz < 3 {
            return Err(GridError::InvalidDomain(format!("nz must be >= 3, got {}", self.nz)));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.length * self.length * self.depth
    }
}

/// Vector-space operations needed by the column kernels; implemented for the
/// physical (`f64`) and spectral (`Complex64`) representations.
pub trait ColumnValue: Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl ColumnValue for f64 {}
impl ColumnValue for Complex64 {}

/// A domain together with FFT plans, wavenumbers and vertical quadrature.
#[derive(Clone)]
pub struct Grid {
    domain: Domain,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers `2*pi*k/L` per DFT index; zero at Nyquist.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// Integer wavenumbers (signed), Nyquist reported as `n/2`.
    ix: Vec<i64>,
    iy: Vec<i64>,
    keep_x: Vec<bool>,
    keep_y: Vec<bool>,
    dz: f64,
    z: Vec<f64>,
    weights: Vec<f64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("domain", &self.domain).finish()
    }
}

fn signed_index(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(domain: Domain) -> Result<Self, GridError> {
        domain.validate()?;
        let mut planner = FftPlanner::new();
        let Domain { length, depth, nx, ny, nz } = domain;
        let wn = |n: usize| -> (Vec<i64>, Vec<f64>, Vec<bool>) {
            let cut = ((n - 1) / 3) as i64;
            let idx: Vec<i64> = (0..n).map(|i| signed_index(i, n)).collect();
            let k = idx
                .iter()
                .map(|&s| if s.unsigned_abs() as usize * 2 == n { 0.0 } else { 2.0 * PI * s as f64 / length })
                .collect();
            let keep = idx.iter().map(|&s| s.abs() <= cut).collect();
            (idx, k, keep)
        };
        let (ix, kx, keep_x) = wn(nx);
        let (iy, ky, keep_y) = wn(ny);
        let dz = depth / (nz - 1) as f64;
        let z = (0..nz).map(|k| -depth + k as f64 * dz).collect();
        let mut weights = vec![dz; nz];
        weights[0] = 0.5 * dz;
        weights[nz - 1] = 0.5 * dz;
        Ok(Self {
            domain,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
            kx,
            ky,
            ix,
            iy,
            keep_x,
            keep_y,
            dz,
            z,
            weights,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }
    pub fn nx(&self) -> usize {
        self.domain.nx
    }
    pub fn ny(&self) -> usize {
        self.domain.ny
    }
    pub fn nz(&self) -> usize {
        self.domain.nz
    }
    pub fn nxy(&self) -> usize {
        self.domain.nx * self.domain.ny
    }
    pub fn len(&self) -> usize {
        self.nxy() * self.domain.nz
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn length(&self) -> f64 {
        self.domain.length
    }
    pub fn depth(&self) -> f64 {
        self.domain.depth
    }
    pub fn dz(&self) -> f64 {
        self.dz
    }
    /// Vertical node coordinates, bottom to top.
    pub fn z(&self) -> &[f64] {
        &self.z
    }
    /// Trapezoid weights of the vertical nodes (sum = depth).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn x(&self, i: usize) -> f64 {
        self.domain.length * i as f64 / self.domain.nx as f64
    }
    pub fn y(&self, j: usize) -> f64 {
        self.domain.length * j as f64 / self.domain.ny as f64
    }
    /// Horizontal cell area `L^2 / (nx ny)`.
    pub fn cell_area(&self) -> f64 {
        self.domain.length * self.domain.length / self.nxy() as f64
    }
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.domain.ny + j) * self.domain.nx + i
    }
    /// Angular wavenumber pair of the horizontal spectral index `p = jy * nx + ix`.
    #[inline]
    pub fn wavenumber(&self, p: usize) -> (f64, f64) {
        (self.kx[p % self.domain.nx], self.ky[p / self.domain.nx])
    }
    /// Signed integer wavenumbers of horizontal spectral index `p`.
    #[inline]
    pub fn mode_index(&self, p: usize) -> (i64, i64) {
        (self.ix[p % self.domain.nx], self.iy[p / self.domain.nx])
    }
    /// `|k|^2` of horizontal spectral index `p` (Nyquist entries count as zero).
    #[inline]
    pub fn k2(&self, p: usize) -> f64 {
        let (a, b) = self.wavenumber(p);
        a * a + b * b
    }
    /// Whether horizontal mode `p` survives the two-thirds truncation.
    #[inline]
    pub fn kept(&self, p: usize) -> bool {
        self.keep_x[p % self.domain.nx] && self.keep_y[p / self.domain.nx]
    }
    /// Largest retained integer wavenumber per direction.
    pub fn cutoff(&self) -> (usize, usize) {
        ((self.domain.nx - 1) / 3, (self.domain.ny - 1) / 3)
    }
    /// Horizontal spectral index of signed integer wavenumbers.
    pub fn spectral_index(&self, mx: i64, my: i64) -> usize {
        let nx = self.domain.nx as i64;
        let ny = self.domain.ny as i64;
        let i = mx.rem_euclid(nx) as usize;
        let j = my.rem_euclid(ny) as usize;
        j * self.domain.nx + i
    }

    /// In-place forward horizontal DFT of every level (unnormalised).
    pub fn fft_forward(&self, data: &mut [Complex64]) {
        self.fft2(data, true);
    }

    /// In-place inverse horizontal DFT of every level, normalised so that
    /// `fft_inverse(fft_forward(f)) == f`.
    pub fn fft_inverse(&self, data: &mut [Complex64]) {
        self.fft2(data, false);
        let s = 1.0 / self.nxy() as f64;
        for c in data.iter_mut() {
            *c *= s;
        }
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.domain.nx, self.domain.ny);
        let nxy = nx * ny;
        assert_eq!(data.len() % nxy, 0, "array length must be a multiple of nx*ny");
        let (fx, fy) = if forward { (&self.fft_x, &self.fft_y) } else { (&self.ifft_x, &self.ifft_y) };
        let mut scratch = vec![Complex64::default(); fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len())];
        fx.process_with_scratch(data, &mut scratch);
        let mut col = vec![Complex64::default(); nxy];
        for level in data.chunks_mut(nxy) {
            for j in 0..ny {
                for i in 0..nx {
                    col[i * ny + j] = level[j * nx + i];
                }
            }
            fy.process_with_scratch(&mut col, &mut scratch);
            for j in 0..ny {
                for i in 0..nx {
                    level[j * nx + i] = col[i * ny + j];
                }
            }
        }
    }

    /// Physical values to spectral coefficients (any number of levels).
    pub fn to_spectral(&self, values: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft_forward(&mut c);
        c
    }

    /// Spectral coefficients to physical values (real part of the inverse DFT).
    pub fn to_physical(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut c = coeffs.to_vec();
        self.fft_inverse(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    // ---- vertical column kernels -------------------------------------------------

    /// Apply `op` to every vertical column of `src`, writing into `dst`.
    /// `op(column_in, column_out)` sees contiguous copies of length `nz_in`/`nz_out`.
    pub fn map_columns<T: ColumnValue>(
        &self,
        src: &[T],
        nz_out: usize,
        mut op: impl FnMut(usize, &[T], &mut [T]),
    ) -> Vec<T> {
        let nxy = self.nxy();
        let nz_in = src.len() / nxy;
        let mut out = vec![T::default(); nxy * nz_out];
        let mut cin = vec![T::default(); nz_in];
        let mut cout = vec![T::default(); nz_out];
        for p in 0..nxy {
            for k in 0..nz_in {
                cin[k] = src[k * nxy + p];
            }
            op(p, &cin, &mut cout);
            for k in 0..nz_out {
                out[k * nxy + p] = cout[k];
            }
        }
        out
    }

    /// Summation-by-parts first derivative: centred in the interior, one-sided
    /// at the two end nodes. With the trapezoid weights `W` it satisfies
    /// `W D + (W D)^T = diag(-1, 0, .., 0, 1)`.
    pub fn dz_nodes<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        let n = col.len();
        let inv = 1.0 / self.dz;
        out[0] = (col[1] - col[0]) * inv;
        out[n - 1] = (col[n - 1] - col[n - 2]) * inv;
        for k in 1..n - 1 {
            out[k] = (col[k + 1] - col[k - 1]) * (0.5 * inv);
        }
    }

    /// Forward differences located at the `nz - 1` cell midpoints.
    pub fn dz_cells<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        let inv = 1.0 / self.dz;
        for k in 0..col.len() - 1 {
            out[k] = (col[k + 1] - col[k]) * inv;
        }
    }

    /// Transpose of [`Grid::dz_cells`] with respect to the plain Euclidean product.
    pub fn dz_cells_transpose<T: ColumnValue>(&self, cells: &[T], out: &mut [T]) {
        let n = cells.len() + 1;
        let inv = 1.0 / self.dz;
        for v in out.iter_mut() {
            *v = T::default();
        }
        for k in 0..n - 1 {
            out[k + 1] = out[k + 1] + cells[k] * inv;
            out[k] = out[k] - cells[k] * inv;
        }
    }

    /// `-d^2/dz^2` with ghost-point Neumann closure at the bottom and the Robin
    /// closure `dz f + alpha f = 0` at the surface (`alpha = 0` gives Neumann).
    pub fn neg_dzz<T: ColumnValue>(&self, col: &[T], alpha: f64, out: &mut [T]) {
        let n = col.len();
        let inv2 = 1.0 / (self.dz * self.dz);
        out[0] = (col[0] - col[1]) * (2.0 * inv2);
        for k in 1..n - 1 {
            out[k] = (col[k] * 2.0 - col[k - 1] - col[k + 1]) * inv2;
        }
        out[n - 1] = (col[n - 1] - col[n - 2]) * (2.0 * inv2) + col[n - 1] * (2.0 * alpha / self.dz);
    }

    /// Solve `(diag * I + coef * neg_dzz) x = rhs` in place (Thomas algorithm).
    pub fn solve_helmholtz_column<T: ColumnValue>(&self, diag: f64, coef: f64, alpha: f64, rhs: &mut [T]) {
        let n = rhs.len();
        let inv2 = 1.0 / (self.dz * self.dz);
        let lower = |k: usize| if k == n - 1 { -2.0 * coef * inv2 } else { -coef * inv2 };
        let upper = |k: usize| if k == 0 { -2.0 * coef * inv2 } else { -coef * inv2 };
        let main = |k: usize| {
            let mut d = diag + 2.0 * coef * inv2;
            if k == n - 1 {
                d += 2.0 * coef * alpha / self.dz;
            }
            d
        };
        let mut cp = vec![0.0; n];
        let mut b0 = main(0);
        assert!(b0.abs() > 0.0, "singular vertical system");
        cp[0] = upper(0) / b0;
        rhs[0] = rhs[0] * (1.0 / b0);
        for k in 1..n {
            b0 = main(k) - lower(k) * cp[k - 1];
            assert!(b0.abs() > 0.0, "singular vertical system");
            if k < n - 1 {
                cp[k] = upper(k) / b0;
            }
            rhs[k] = (rhs[k] - rhs[k - 1] * lower(k)) * (1.0 / b0);
        }
        for k in (0..n - 1).rev() {
            rhs[k] = rhs[k] - rhs[k + 1] * cp[k];
        }
    }

    /// Trapezoid integral over the column.
    pub fn integrate_column<T: ColumnValue>(&self, col: &[T]) -> T {
        col.iter().zip(&self.weights).fold(T::default(), |acc, (&v, &w)| acc + v * w)
    }

    /// Cumulative trapezoid `int_{-h}^{z_k}`; exactly zero at the bottom node.
    pub fn cumulative_from_bottom<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        let half = 0.5 * self.dz;
        out[0] = T::default();
        for k in 1..col.len() {
            out[k] = out[k - 1] + (col[k - 1] + col[k]) * half;
        }
    }

    /// Cumulative trapezoid `int_{z_k}^0`; exactly zero at the surface node.
    pub fn cumulative_from_top<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        let n = col.len();
        let half = 0.5 * self.dz;
        out[n - 1] = T::default();
        for k in (0..n - 1).rev() {
            out[k] = out[k + 1] + (col[k] + col[k + 1]) * half;
        }
    }

    /// Transpose of [`Grid::cumulative_from_bottom`] with respect to the weighted
    /// column product `sum_k w_k a_k b_k`.
    pub fn cumulative_from_bottom_adjoint<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        let n = col.len();
        let half = 0.5 * self.dz;
        let mut acc = T::default();
        let mut raw = vec![T::default(); n];
        // cell (i, i+1) feeds every node j >= i + 1
        for i in (0..n - 1).rev() {
            acc = acc + col[i + 1] * self.weights[i + 1];
            raw[i] = raw[i] + acc * half;
            raw[i + 1] = raw[i + 1] + acc * half;
        }
        for k in 0..n {
            out[k] = raw[k] * (1.0 / self.weights[k]);
        }
    }

    /// Transpose of [`Grid::cumulative_from_top`] with respect to the weighted
    /// column product `sum_k w_k a_k b_k`.
    pub fn cumulative_from_top_adjoint<T: ColumnValue>(&self, col: &[T], out: &mut [T]) {
        // <I f, g>_w = sum_j w_j g_j sum_{i>=j} (f_i + f_{i+1}) dz/2
        let n = col.len();
        let half = 0.5 * self.dz;
        let mut acc = T::default();
        let mut raw = vec![T::default(); n];
        // s_i = sum_{j<=i} w_j g_j for the cell (i, i+1)
        for i in 0..n - 1 {
            acc = acc + col[i] * self.weights[i];
            raw[i] = raw[i] + acc * half;
            raw[i + 1] = raw[i + 1] + acc * half;
        }
        for k in 0..n {
            out[k] = raw[k] * (1.0 / self.weights[k]);
        }
    }
}
