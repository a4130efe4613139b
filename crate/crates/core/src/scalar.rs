//! Floating-point abstraction for the numerical kernels.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Scalar type the solvers and estimators are generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + rustfft::FftNum
    + 'static
{
    /// Draw a standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample::<f32, _>(rand_distr::StandardNormal)
    }
}

impl Scalar for f64 {
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    }
}

/// Shorthand for converting an `f64` constant into the working scalar type.
#[inline]
pub fn c<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("constant conversion")
}

/// `x` as `S` from a usize (grid sizes, sample counts).
#[inline]
pub fn cu<S: Scalar>(x: usize) -> S {
    S::from_usize(x).expect("usize conversion")
}
