//! The standard smooth bump, its derivatives, and a smooth compactly
//! supported cutoff built from it.

use crate::scalar::{c, Scalar};

/// Mass of `exp(-1/(1-x^2))` over `(-1, 1)`, precomputed to high precision.
const BUMP_MASS: f64 = 0.443993816168079437823048921171;

/// Normalised bump: smooth, even, unit mass, supported in `(-1, 1)`.
#[inline]
pub fn bump<S: Scalar>(x: S) -> S {
    let x2 = x * x;
    if x2 >= S::one() {
        return S::zero();
    }
    (-(S::one() / (S::one() - x2))).exp() / c::<S>(BUMP_MASS)
}

/// First derivative of the normalised bump.
#[inline]
pub fn bump_deriv<S: Scalar>(x: S) -> S {
    let x2 = x * x;
    if x2 >= S::one() {
        return S::zero();
    }
    let q = S::one() - x2;
    bump(x) * (-c::<S>(2.0) * x / (q * q))
}

/// Second derivative of the normalised bump.
#[inline]
pub fn bump_second_deriv<S: Scalar>(x: S) -> S {
    let x2 = x * x;
    if x2 >= S::one() {
        return S::zero();
    }
    let q = S::one() - x2;
    let a = -c::<S>(2.0) * x / (q * q);
    let da = (-c::<S>(2.0) - c::<S>(6.0) * x2) / (q * q * q);
    bump(x) * (a * a + da)
}

/// Sup norm of the normalised bump.
pub fn bump_sup<S: Scalar>() -> S {
    bump(S::zero())
}

/// `L^1` norm of the bump derivative; the bump is unimodal so this is
/// `2 * J(0)`.
pub fn bump_deriv_l1<S: Scalar>() -> S {
    c::<S>(2.0) * bump(S::zero())
}

/// Smooth monotone step: 1 on `s <= 0`, 0 on `s >= 1`.
#[inline]
pub fn smooth_step<S: Scalar>(s: S) -> S {
    if s <= S::zero() {
        return S::one();
    }
    if s >= S::one() {
        return S::zero();
    }
    let g = |t: S| (-(S::one() / t)).exp();
    let a = g(S::one() - s);
    let b = g(s);
    a / (a + b)
}

/// Derivative of [`smooth_step`].
#[inline]
pub fn smooth_step_deriv<S: Scalar>(s: S) -> S {
    if s <= S::zero() || s >= S::one() {
        return S::zero();
    }
    let g = |t: S| (-(S::one() / t)).exp();
    let dg = |t: S| g(t) / (t * t);
    let a = g(S::one() - s);
    let b = g(s);
    let da = -dg(S::one() - s);
    let db = dg(s);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Second derivative of [`smooth_step`].
#[inline]
pub fn smooth_step_second_deriv<S: Scalar>(s: S) -> S {
    if s <= S::zero() || s >= S::one() {
        return S::zero();
    }
    let g = |t: S| (-(S::one() / t)).exp();
    let dg = |t: S| g(t) / (t * t);
    let ddg = |t: S| g(t) * (S::one() / (t * t * t * t) - c::<S>(2.0) / (t * t * t));
    let a = g(S::one() - s);
    let b = g(s);
    let da = -dg(S::one() - s);
    let db = dg(s);
    let dda = ddg(S::one() - s);
    let ddb = ddg(s);
    let sum = a + b;
    ((dda * b - a * ddb) * sum - c::<S>(2.0) * (da * b - a * db) * (da + db)) / (sum * sum * sum)
}

/// Smooth cutoff for weight truncation: `zeta(0) = 1`, `0 <= zeta <= 1`,
/// identically 1 on `|x| <= 1`, supported in `|x| < 2`.
#[inline]
pub fn cutoff<S: Scalar>(x: S) -> S {
    smooth_step(x.abs() - S::one())
}

#[inline]
pub fn cutoff_deriv<S: Scalar>(x: S) -> S {
    let s = x.abs() - S::one();
    smooth_step_deriv(s) * x.signum()
}

/// Nonnegative plateau profile on the torus: `amp` on a disc of radius
/// `half` around `center`, smoothly decaying to zero over a band of width
/// `edge`, with analytic first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau1d<S: Scalar> {
    pub amp: S,
    pub center: S,
    pub half: S,
    pub edge: S,
    /// Torus half-width (for periodic distance).
    pub period_half: S,
}

impl<S: Scalar> Plateau1d<S> {
    fn signed_dist(&self, x: S) -> S {
        let period = self.period_half + self.period_half;
        let mut d = x - self.center;
        while d < -self.period_half {
            d += period;
        }
        while d >= self.period_half {
            d -= period;
        }
        d
    }

    #[inline]
    fn arg(&self, x: S) -> (S, S) {
        let d = self.signed_dist(x);
        ((d.abs() - self.half) / self.edge, d.signum())
    }

    pub fn value(&self, x: S) -> S {
        self.amp * smooth_step(self.arg(x).0)
    }

    pub fn deriv(&self, x: S) -> S {
        let (s, sign) = self.arg(x);
        self.amp * smooth_step_deriv(s) / self.edge * sign
    }

    /// Second derivative; the radial kink at the center lies inside the
    /// plateau where the profile is constant, so the formula is global.
    pub fn second_deriv(&self, x: S) -> S {
        let (s, _) = self.arg(x);
        self.amp * smooth_step_second_deriv(s) / (self.edge * self.edge)
    }

    /// Support radius (distance beyond which the profile vanishes).
    pub fn support_radius(&self) -> S {
        self.half + self.edge
    }
}

/// Sup norm of the cutoff derivative, computed once by a fine sweep.
pub fn cutoff_deriv_sup<S: Scalar>() -> S {
    let mut m = S::zero();
    for i in 0..=4000 {
        let x = S::one() + c::<S>(i as f64 / 4000.0);
        m = m.max(cutoff_deriv(x).abs());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_simpson;
    use approx::assert_relative_eq;

    #[test]
    fn bump_has_unit_mass() {
        let m = adaptive_simpson(&|x: f64| bump(x), -1.0, 1.0, 1e-12);
        assert_relative_eq!(m, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn bump_is_even_and_supported() {
        assert_eq!(bump(1.0f64), 0.0);
        assert_eq!(bump(-1.2f64), 0.0);
        assert_relative_eq!(bump(0.3f64), bump(-0.3f64));
    }

    #[test]
    fn bump_deriv_matches_finite_difference() {
        for &x in &[-0.8f64, -0.3, 0.1, 0.6, 0.95] {
            let h = 1e-6;
            let fd = (bump(x + h) - bump(x - h)) / (2.0 * h);
            assert_relative_eq!(bump_deriv(x), fd, epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    #[test]
    fn bump_second_deriv_matches_finite_difference() {
        for &x in &[-0.7f64, 0.0, 0.4, 0.9] {
            let h = 1e-5;
            let fd = (bump(x + h) - 2.0 * bump(x) + bump(x - h)) / (h * h);
            assert_relative_eq!(bump_second_deriv(x), fd, epsilon = 1e-4, max_relative = 1e-4);
        }
    }

    #[test]
    fn deriv_l1_matches_quadrature() {
        let l1 = adaptive_simpson(&|x: f64| bump_deriv(x).abs(), -1.0, 1.0, 1e-12);
        assert_relative_eq!(l1, bump_deriv_l1::<f64>(), epsilon = 1e-9);
        assert_relative_eq!(l1, 1.65713767973821030, epsilon = 1e-9);
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0f64), 1.0);
        assert_eq!(cutoff(0.99f64), 1.0);
        assert_eq!(cutoff(2.0f64), 0.0);
        let v = cutoff(1.5f64);
        assert!(v > 0.0 && v < 1.0);
        assert_relative_eq!(cutoff(1.5f64), cutoff(-1.5f64));
    }

    #[test]
    fn smooth_step_derivs_match_finite_differences() {
        for &s in &[0.1f64, 0.35, 0.5, 0.72, 0.9] {
            let h = 1e-6;
            let fd1 = (smooth_step(s + h) - smooth_step(s - h)) / (2.0 * h);
            assert_relative_eq!(smooth_step_deriv(s), fd1, epsilon = 1e-6, max_relative = 1e-5);
            let h = 1e-5;
            let fd2 = (smooth_step(s + h) - 2.0 * smooth_step(s) + smooth_step(s - h)) / (h * h);
            assert_relative_eq!(
                smooth_step_second_deriv(s),
                fd2,
                epsilon = 1e-4,
                max_relative = 1e-4
            );
        }
    }

    #[test]
    fn smooth_step_is_monotone() {
        let mut prev = smooth_step(0.0f64);
        for i in 1..=100 {
            let v = smooth_step(i as f64 / 100.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }
}
