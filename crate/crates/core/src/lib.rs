//! Numerical harmonic maps from the plane into `U(n)` and Grassmannians via
//! loop-group factorization of holomorphic potentials.

pub mod demos;
pub mod dpw;
pub mod dressing;
pub mod error;
pub mod fourier;
pub mod grassmann;
pub mod grid;
pub mod iwasawa;
pub mod laurent;
pub mod matrix;
pub mod potential;

pub use error::{Error, Result};
pub use fourier::{circle_sample, coeff_recover, loop_inverse, loop_inverse_with};
pub use laurent::{loop_mul, LaurentLoop};
pub use matrix::{c64, ComplexMatrix, C64};
