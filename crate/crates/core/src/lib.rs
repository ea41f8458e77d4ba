//! Numerical laboratory for small-noise asymptotics of the stochastic 3D
//! viscous primitive equations on a periodic-lateral box.
//!
//! Layout: [`grid`] and [`field`] hold the discretisation, [`operators`] the
//! spatial operators, [`noise`] the finite-mode multiplicative noise,
//! [`dynamics`] the time integrators, [`deviations`] rate functionals and
//! scaling studies, and [`verify`] the property harnesses.

pub mod calc;
pub mod deviations;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod field;
pub mod grid;
pub mod noise;
pub mod norms;
pub mod operators;
pub mod snapshot;
pub mod stats;
pub mod verify;

pub use error::{BlowUpInfo, CoreError, GridError};
pub use exec::Execution;
pub use field::{State, VectorField2};
pub use grid::{Domain, Grid};
pub use operators::{Forcing, Model, PhysicalParams};
