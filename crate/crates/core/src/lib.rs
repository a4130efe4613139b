//! Numerical laboratory for scalar conservation laws driven by semilinear
//! Gaussian noise.
//!
//! The crate simulates the viscous approximation
//!
//! ```text
//! du + d/dx f(u) dt = \int_Z sigma(x, u, z) W(dt, dz) + eps * u_xx dt
//! ```
//!
//! on a periodic 1-d grid, together with the linearised (tangent) equation
//! solved by the Malliavin derivative of the solution, and turns the
//! quantitative estimates of the underlying well-posedness theory (weighted
//! moment bounds, heat-kernel contraction, L^1 contraction, Kato inequality,
//! doubling-of-variables terms, fractional-BV moduli, an anticipating Ito
//! formula) into Monte Carlo diagnostics with explicit tolerance budgets.
//!
//! All numerical kernels are generic over the scalar type through the
//! [`Scalar`] trait (`f32` or `f64`); the `*64` aliases below fix the
//! double-precision instantiations used by the experiment harness.

pub mod bump;
pub mod grid;
pub mod mc;
pub mod quad;
pub mod scalar;
pub mod stats;
pub mod tolerances;

pub mod weights;

pub mod noise;

pub mod heat;

pub mod solver;

pub mod malliavin;

pub mod entropy;

pub mod analysis;

pub mod ito;

pub mod harness;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver aborted at step {step}: {reason}")]
    SolverAbort { step: usize, reason: String },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use scalar::Scalar;

// Concrete double-precision aliases; the harness and CLI work with these.
pub type Grid64 = grid::Grid1d<f64>;
pub type GridField64 = grid::GridField<f64>;
pub type Weight64 = weights::Weight<f64>;
pub type Mollifier64 = weights::Mollifier<f64>;
pub type NoiseSpace64 = noise::NoiseSpace<f64>;
pub type NoisePath64 = noise::NoisePath<f64>;
pub type SigmaCoeff64 = noise::SigmaCoeff<f64>;
pub type FluxFn64 = solver::FluxFn<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
