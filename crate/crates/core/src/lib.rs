//! Numerical experiments with linear cocycles over hyperbolic base dynamics:
//! Lyapunov exponents, periodic approximation, Lyapunov norms and joint
//! spectral radii.

pub mod base;
pub mod cocycle;
pub mod error;
pub mod exponents;
pub mod harness;
pub mod linalg;
pub mod lyapunov_norm;
pub mod periodic;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
