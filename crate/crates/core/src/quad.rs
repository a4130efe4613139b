//! 1-d quadrature: adaptive Simpson for constants, Gauss-Legendre panels for
//! smooth integrands on bounded intervals.

use crate::scalar::{c, cu, Scalar};

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
pub fn adaptive_simpson<S: Scalar>(f: &impl Fn(S) -> S, a: S, b: S, tol: S) -> S {
    fn simpson<S: Scalar>(f: &impl Fn(S) -> S, a: S, fa: S, b: S, fb: S) -> (S, S, S) {
        let m = (a + b) / c::<S>(2.0);
        let fm = f(m);
        let h6 = (b - a) / c::<S>(6.0);
        (m, fm, h6 * (fa + c::<S>(4.0) * fm + fb))
    }
    fn recurse<S: Scalar>(
        f: &impl Fn(S) -> S,
        a: S,
        fa: S,
        b: S,
        fb: S,
        whole: S,
        m: S,
        fm: S,
        tol: S,
        depth: u32,
    ) -> S {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= c::<S>(15.0) * tol {
            left + right + delta / c::<S>(15.0)
        } else {
            let half = tol / c::<S>(2.0);
            recurse(f, a, fa, m, fm, left, lm, flm, half, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, half, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; accurate to machine
/// precision for the moderate orders used here.
pub fn gauss_legendre<S: Scalar>(n: usize) -> (Vec<S>, Vec<S>) {
    assert!(n >= 1);
    let mut nodes = vec![S::zero(); n];
    let mut weights = vec![S::zero(); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess.
        let mut z = c::<S>((std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos());
        let mut pp = S::zero();
        for _ in 0..100 {
            let mut p1 = S::one();
            let mut p2 = S::zero();
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jj = cu::<S>(j);
                p1 = ((c::<S>(2.0) * jj + S::one()) * z * p2 - jj * p3) / (jj + S::one());
            }
            pp = cu::<S>(n) * (z * p1 - p2) / (z * z - S::one());
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= c::<S>(1e-15) * (S::one() + z.abs()) {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = c::<S>(2.0) / ((S::one() - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate `f` over `[a, b]` with an `n`-point Gauss-Legendre rule.
pub fn gauss_legendre_integrate<S: Scalar>(f: &impl Fn(S) -> S, a: S, b: S, n: usize) -> S {
    let (nodes, weights) = gauss_legendre::<S>(n);
    let half = (b - a) / c::<S>(2.0);
    let mid = (a + b) / c::<S>(2.0);
    let mut acc = S::zero();
    for (x, w) in nodes.iter().zip(&weights) {
        acc += *w * f(mid + half * *x);
    }
    acc * half
}

/// Composite Gauss-Legendre: `panels` panels of `n` points each.
pub fn gauss_legendre_composite<S: Scalar>(
    f: &impl Fn(S) -> S,
    a: S,
    b: S,
    n: usize,
    panels: usize,
) -> S {
    let width = (b - a) / cu::<S>(panels);
    let mut acc = S::zero();
    for p in 0..panels {
        let lo = a + cu::<S>(p) * width;
        acc += gauss_legendre_integrate(f, lo, lo + width, n);
    }
    acc
}
