//! Periodic 1-d grid and scalar fields living on it.
//!
//! All integrals over the real line are truncated to the torus `[-L, L)`
//! with a uniform grid; the weights used by the norms decay fast enough that
//! the tail beyond the torus is negligible and is reported separately by the
//! weight module.

use crate::scalar::{cu, Scalar};
use crate::{Error, Result};

/// Uniform periodic grid on `[-L, L)` with `n_x` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1d<S: Scalar> {
    n_x: usize,
    half_width: S,
}

impl<S: Scalar> Grid1d<S> {
    pub fn new(n_x: usize, half_width: S) -> Result<Self> {
        if !n_x.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "grid size must be a power of two, got {n_x}"
            )));
        }
        if !(half_width > S::zero()) {
            return Err(Error::InvalidInput("grid half-width must be positive".into()));
        }
        Ok(Self { n_x, half_width })
    }

    #[inline]
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    pub fn half_width(&self) -> S {
        self.half_width
    }

    #[inline]
    pub fn dx(&self) -> S {
        (self.half_width + self.half_width) / cu::<S>(self.n_x)
    }

    /// Coordinate of cell `j`, in `[-L, L)`.
    #[inline]
    pub fn x(&self, j: usize) -> S {
        -self.half_width + cu::<S>(j) * self.dx()
    }

    /// All cell coordinates.
    pub fn coords(&self) -> Vec<S> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    /// Signed distance from `a` to `b` on the torus, in `[-L, L)`.
    #[inline]
    pub fn torus_dist(&self, a: S, b: S) -> S {
        let period = self.half_width + self.half_width;
        let mut d = b - a;
        while d < -self.half_width {
            d += period;
        }
        while d >= self.half_width {
            d -= period;
        }
        d
    }

    /// Fourier wavenumber of DFT mode `k` (stored in FFT layout).
    #[inline]
    pub fn wavenumber(&self, k: usize) -> S {
        let n = self.n_x;
        let signed = if k <= n / 2 { k as isize } else { k as isize - n as isize };
        S::PI() * cu::<S>(signed.unsigned_abs()) / self.half_width
            * if signed < 0 { -S::one() } else { S::one() }
    }
}

/// Scalar field `u(t, .)` on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField<S: Scalar> {
    grid: Grid1d<S>,
    /// Current time of the snapshot.
    pub t: S,
    values: Vec<S>,
}

impl<S: Scalar> GridField<S> {
    pub fn zeros(grid: Grid1d<S>) -> Self {
        Self { grid, t: S::zero(), values: vec![S::zero(); grid.n_x()] }
    }

    pub fn from_fn(grid: Grid1d<S>, f: impl Fn(S) -> S) -> Self {
        let values = (0..grid.n_x()).map(|j| f(grid.x(j))).collect();
        Self { grid, t: S::zero(), values }
    }

    pub fn from_values(grid: Grid1d<S>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.n_x() {
            return Err(Error::InvalidInput(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.n_x()
            )));
        }
        Ok(Self { grid, t: S::zero(), values })
    }

    #[inline]
    pub fn grid(&self) -> Grid1d<S> {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[S] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid integral `dx * sum u_j` (trapezoid on the periodic grid).
    pub fn integral(&self) -> S {
        crate::stats::pairwise_sum(&self.values) * self.grid.dx()
    }

    pub fn mean(&self) -> S {
        crate::stats::pairwise_sum(&self.values) / cu::<S>(self.values.len())
    }

    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            grid: self.grid,
            t: self.t,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn binary(&self, other: &Self, f: impl Fn(S, S) -> S) -> Self {
        debug_assert_eq!(self.grid.n_x(), other.grid.n_x());
        Self {
            grid: self.grid,
            t: self.t,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, a: S) -> Self {
        self.map(|v| a * v)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.binary(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.binary(other, |a, b| a + b)
    }

    /// Central-difference derivative on the periodic grid.
    pub fn central_derivative(&self) -> Self {
        let n = self.len();
        let two_dx = self.grid.dx() + self.grid.dx();
        let v = &self.values;
        let values = (0..n)
            .map(|j| (v[(j + 1) % n] - v[(j + n - 1) % n]) / two_dx)
            .collect();
        Self { grid: self.grid, t: self.t, values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_requires_power_of_two() {
        assert!(Grid1d::<f64>::new(100, 10.0).is_err());
        assert!(Grid1d::<f64>::new(128, 10.0).is_ok());
    }

    #[test]
    fn coords_cover_torus() {
        let g = Grid1d::<f64>::new(8, 4.0).unwrap();
        assert_relative_eq!(g.dx(), 1.0);
        assert_relative_eq!(g.x(0), -4.0);
        assert_relative_eq!(g.x(7), 3.0);
    }

    #[test]
    fn torus_distance_wraps() {
        let g = Grid1d::<f64>::new(8, 4.0).unwrap();
        assert_relative_eq!(g.torus_dist(3.5, -3.5), 1.0);
        assert_relative_eq!(g.torus_dist(-3.5, 3.5), -1.0);
    }

    #[test]
    fn integral_of_sine_vanishes() {
        let g = Grid1d::<f64>::new(256, 10.0).unwrap();
        let u = GridField::from_fn(g, |x| (std::f64::consts::PI * x / 10.0).sin());
        assert!(u.integral().abs() < 1e-12);
    }

    #[test]
    fn central_derivative_of_sine() {
        let g = Grid1d::<f64>::new(1024, 10.0).unwrap();
        let k = std::f64::consts::PI / 10.0;
        let u = GridField::from_fn(g, |x| (k * x).sin());
        let du = u.central_derivative();
        for (j, &d) in du.values().iter().enumerate() {
            let exact = k * (k * g.x(j)).cos();
            assert!((d - exact).abs() < 1e-4);
        }
    }

    #[test]
    fn wavenumber_layout() {
        let g = Grid1d::<f64>::new(8, 4.0).unwrap();
        assert_relative_eq!(g.wavenumber(0), 0.0);
        assert_relative_eq!(g.wavenumber(1), std::f64::consts::PI / 4.0);
        assert_relative_eq!(g.wavenumber(7), -std::f64::consts::PI / 4.0);
    }
}
