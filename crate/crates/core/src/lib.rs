//! Numerical laboratory for model trilinear kernels on the circle: singular
//! oscillatory quadrature, stationary-phase and Airy asymptotics, Hermitian
//! form sweeps over test vectors, and constrained spectral-sum maximization.

pub mod boundchain;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod phase;
pub mod quadrature;
pub mod spectral;
pub mod testvectors;

pub use error::{Error, Result};
