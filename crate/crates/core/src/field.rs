//! Field containers: scalar and horizontal-vector fields, the state `U = (v, T)`
//! and their spectral counterparts.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calc;
use crate::error::GridError;
use crate::grid::Grid;

/// Storage representation of a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Physical,
    Spectral,
}

/// Real grid values of a scalar.
pub type ScalarField = Vec<f64>;

/// Horizontal vector field `(v1, v2)`.
pub type VectorField2 = [Vec<f64>; 2];

/// Anything that can be viewed as a list of physical component arrays.
pub trait Components {
    fn components(&self) -> Vec<&[f64]>;
}

impl Components for Vec<f64> {
    fn components(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
}

impl Components for [f64] {
    fn components(&self) -> Vec<&[f64]> {
        vec![self]
    }
}

impl Components for [Vec<f64>; 2] {
    fn components(&self) -> Vec<&[f64]> {
        vec![&self[0], &self[1]]
    }
}

impl Components for State {
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.v[0], &self.v[1], &self.t]
    }
}

/// The prognostic state: horizontal velocity and temperature in physical space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub v: VectorField2,
    pub t: ScalarField,
}

impl State {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.len();
        Self { v: [vec![0.0; n], vec![0.0; n]], t: vec![0.0; n] }
    }

    pub fn new(grid: &Grid, v: VectorField2, t: ScalarField) -> Result<Self, GridError> {
        let s = Self { v, t };
        s.check_shape(grid)?;
        Ok(s)
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<(), GridError> {
        for c in self.components() {
            if c.len() != grid.len() {
                return Err(GridError::ShapeMismatch { expected: grid.len(), found: c.len() });
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        for (name, c) in ["v1", "v2", "T"].into_iter().zip(self.components()) {
            if let Some(index) = c.iter().position(|x| !x.is_finite()) {
                return Err(GridError::NonFinite { what: name, index });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    pub fn comps_mut(&mut self) -> [&mut Vec<f64>; 3] {
        let [a, b] = &mut self.v;
        [a, b, &mut self.t]
    }

    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self { v: [f(&self.v[0]), f(&self.v[1])], t: f(&self.t) }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect::<Vec<_>>();
        Self { v: [z(&self.v[0], &other.v[0]), z(&self.v[1], &other.v[1])], t: z(&self.t, &other.t) }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        for (dst, src) in self.comps_mut().into_iter().zip(x.components()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.comps_mut() {
            for d in c.iter_mut() {
                *d *= a;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|c| c.iter().map(|x| a * x).collect())
    }

    /// Quadrature inner product `(U, U#)`.
    pub fn dot(&self, grid: &Grid, other: &Self) -> f64 {
        self.components().iter().zip(other.components()).map(|(a, b)| calc::dot3(grid, a, b)).sum()
    }

    /// `|U|^2`.
    pub fn norm2(&self, grid: &Grid) -> f64 {
        self.dot(grid, self)
    }

    /// Largest absolute grid value over all components.
    pub fn max_abs(&self) -> f64 {
        self.components().iter().flat_map(|c| c.iter()).fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn to_spectral(&self, grid: &Grid) -> SpectralState {
        SpectralState { comps: self.components().iter().map(|c| grid.to_spectral(c)).collect() }
    }
}

impl Add for &State {
    type Output = State;
    fn add(self, rhs: &State) -> State {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &State {
    type Output = State;
    fn sub(self, rhs: &State) -> State {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &State {
    type Output = State;
    fn mul(self, rhs: f64) -> State {
        self.scaled(rhs)
    }
}

/// Horizontal DFT coefficients of each state component (`v1`, `v2`, `T`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub comps: Vec<Vec<Complex64>>,
}

impl SpectralState {
    pub fn to_physical(&self, grid: &Grid) -> State {
        let mut it = self.comps.iter().map(|c| grid.to_physical(c));
        let v1 = it.next().unwrap_or_default();
        let v2 = it.next().unwrap_or_default();
        let t = it.next().unwrap_or_default();
        State { v: [v1, v2], t }
    }
}

/// Barotropic mean `A2 v`, its z-constant extension `A3 v` and remainder `R v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Averaged {
    pub mean: VectorField2,
    pub extended: VectorField2,
    pub remainder: VectorField2,
}

/// Averaging operators applied to a horizontal vector field.
pub fn vertical_average(grid: &Grid, v: &VectorField2) -> Averaged {
    let mean = [calc::vertical_mean(grid, &v[0]), calc::vertical_mean(grid, &v[1])];
    let extended = [calc::extend(grid, &mean[0]), calc::extend(grid, &mean[1])];
    let remainder = [
        v[0].iter().zip(&extended[0]).map(|(a, b)| a - b).collect(),
        v[1].iter().zip(&extended[1]).map(|(a, b)| a - b).collect(),
    ];
    Averaged { mean, extended, remainder }
}

/// Sample an analytic function on the grid nodes.
pub fn sample(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for (k, &z) in grid.z().iter().enumerate() {
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                out[grid.idx(i, j, k)] = f(grid.x(i), y, z);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn state_arithmetic() {
        let g = Grid::new(Domain::new(1.0, 1.0, 4, 4, 3).unwrap()).unwrap();
        let mut a = State::zeros(&g);
        a.t[3] = 2.0;
        let mut b = a.scaled(3.0);
        b.axpy(-1.0, &a);
        assert_eq!(b.t[3], 4.0);
        assert_eq!((&b - &a).t[3], 2.0);
        assert!(State::new(&g, [vec![0.0; 3], vec![0.0; 48]], vec![0.0; 48]).is_err());
        a.v[1][5] = f64::NAN;
        assert_eq!(a.check_finite(), Err(GridError::NonFinite { what: "v2", index: 5 }));
    }

    #[test]
    fn odd_profile_has_zero_mean() {
        let g = Grid::new(Domain::new(1.0, 2.0, 4, 4, 7).unwrap()).unwrap();
        let v = [sample(&g, |_, _, z| z + 1.0), vec![0.0; g.len()]];
        let av = vertical_average(&g, &v);
        assert!(av.mean[0].iter().all(|m| m.abs() < 1e-14));
        assert!(av.remainder[0].iter().zip(&v[0]).all(|(a, b)| (a - b).abs() < 1e-14));
    }
}
