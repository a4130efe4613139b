//! Weighted L^p spaces on the (truncated) line.
//!
//! The admissible weights are positive C^1 integrable functions `phi` with
//! `|phi'| <= C_phi * phi`. Two base families are built in,
//! `poly:N = (1+x^2)^-N` and `exp:lambda = exp(-lambda sqrt(1+x^2))`,
//! together with mollified and truncated variants of either. Truncated
//! weights are compactly supported and therefore leave the weight class;
//! they exist as the smooth compactly supported approximations used by the
//! localisation arguments, and carry the uniform bounds relative to their
//! base weight instead of a log-Lipschitz constant of their own.

use crate::bump::{bump, bump_deriv, bump_second_deriv, cutoff, cutoff_deriv};
use crate::grid::GridField;
use crate::quad::{adaptive_simpson, gauss_legendre};
use crate::scalar::{c, Scalar};
use crate::{Error, Result};

/// Mollifier `J_r` (even) or `J_r^+ = J_r(. - r)` (supported in `(0, 2r)`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier<S: Scalar> {
    r: S,
    shifted: bool,
}

impl<S: Scalar> Mollifier<S> {
    pub fn new(r: S) -> Result<Self> {
        if !(r > S::zero()) {
            return Err(Error::InvalidInput("mollifier radius must be positive".into()));
        }
        Ok(Self { r, shifted: false })
    }

    /// One-sided mollifier `J_r^+` used for time localisation.
    pub fn new_shifted(r: S) -> Result<Self> {
        Ok(Self { shifted: true, ..Self::new(r)? })
    }

    #[inline]
    pub fn radius(&self) -> S {
        self.r
    }

    #[inline]
    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    #[inline]
    fn arg(&self, x: S) -> S {
        if self.shifted { (x - self.r) / self.r } else { x / self.r }
    }

    #[inline]
    pub fn eval(&self, x: S) -> S {
        bump(self.arg(x)) / self.r
    }

    #[inline]
    pub fn deriv(&self, x: S) -> S {
        bump_deriv(self.arg(x)) / (self.r * self.r)
    }

    #[inline]
    pub fn second_deriv(&self, x: S) -> S {
        bump_second_deriv(self.arg(x)) / (self.r * self.r * self.r)
    }

    /// Support interval (open).
    pub fn support(&self) -> (S, S) {
        if self.shifted {
            (S::zero(), self.r + self.r)
        } else {
            (-self.r, self.r)
        }
    }

    /// Mass under the module quadrature rule; should be 1 to 1e-10.
    pub fn mass(&self) -> S {
        let (lo, hi) = self.support();
        adaptive_simpson(&|x| self.eval(x), lo, hi, c::<S>(1e-13))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind<S: Scalar> {
    /// `(1 + x^2)^{-N}`
    PolyN(u32),
    /// `exp(-lambda sqrt(1 + x^2))`
    ExpLambda(S),
    /// `base * J_delta`
    Mollified { base: Box<Weight<S>>, delta: S },
    /// `base(x) * zeta(x / radius)`, compactly supported
    Truncated { base: Box<Weight<S>>, radius: S },
}

/// A weight function together with its log-Lipschitz constant and cached
/// `L^1` mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight<S: Scalar> {
    kind: WeightKind<S>,
    c_phi: S,
    l1_norm: S,
}

/// Gauss-Legendre order used for mollified-weight evaluations.
const MOLL_QUAD_PTS: usize = 48;

impl<S: Scalar> Weight<S> {
    /// `(1+x^2)^{-N}`; in dimension 1 any `N >= 1` is integrable and
    /// `C_phi = 2N`.
    pub fn poly(n: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidInput("poly weight needs N >= 1".into()));
        }
        let kind = WeightKind::PolyN(n);
        let l1_norm = Self::l1_of(&kind);
        Ok(Self { kind, c_phi: c::<S>(2.0 * n as f64), l1_norm })
    }

    /// `exp(-lambda sqrt(1+x^2))` with `C_phi = lambda`.
    pub fn exp_lambda(lambda: S) -> Result<Self> {
        if !(lambda > S::zero()) {
            return Err(Error::InvalidInput("exp weight needs lambda > 0".into()));
        }
        let kind = WeightKind::ExpLambda(lambda);
        let l1_norm = Self::l1_of(&kind);
        Ok(Self { kind, c_phi: lambda, l1_norm })
    }

    /// Mollification keeps the class and the constant: `C_{phi_delta} = C_phi`.
    /// The mass is preserved exactly.
    pub fn mollified(base: Weight<S>, delta: S) -> Result<Self> {
        if !(delta > S::zero()) {
            return Err(Error::InvalidInput("mollification radius must be positive".into()));
        }
        if matches!(base.kind, WeightKind::Truncated { .. }) {
            return Err(Error::InvalidInput("mollifying a truncated weight is unsupported".into()));
        }
        let c_phi = base.c_phi;
        let l1_norm = base.l1_norm;
        Ok(Self { kind: WeightKind::Mollified { base: Box::new(base), delta }, c_phi, l1_norm })
    }

    /// Truncation `phi_R = phi * zeta(./R)`: compactly supported, coincides
    /// with the base weight on the plateau `|x| <= R`, and satisfies
    /// `|phi_R| <= phi` and `|phi_R'| <= (C_phi + |zeta'|_inf / R) phi`.
    pub fn truncated(base: Weight<S>, radius: S) -> Result<Self> {
        if !(radius > S::one()) {
            return Err(Error::InvalidInput("truncation radius must exceed 1".into()));
        }
        if matches!(base.kind, WeightKind::Truncated { .. }) {
            return Err(Error::InvalidInput("double truncation is unsupported".into()));
        }
        let c_phi = base.c_phi;
        let kind = WeightKind::Truncated { base: Box::new(base), radius };
        let l1_norm = Self::l1_of(&kind);
        Ok(Self { kind, c_phi, l1_norm })
    }

    pub fn kind(&self) -> &WeightKind<S> {
        &self.kind
    }

    /// The constant in `|phi'| <= C_phi phi` (for truncated weights: the
    /// constant of the base weight, used only through the uniform bounds).
    #[inline]
    pub fn c_phi(&self) -> S {
        self.c_phi
    }

    /// Cached `int_R phi`.
    #[inline]
    pub fn l1_norm(&self) -> S {
        self.l1_norm
    }

    /// Whether the weight is a member of the weight class proper
    /// (truncated weights are compactly supported approximations and are not).
    pub fn in_weight_class(&self) -> bool {
        !matches!(self.kind, WeightKind::Truncated { .. })
    }

    fn l1_of(kind: &WeightKind<S>) -> S {
        match kind {
            // Substitute x = tan(theta): integral becomes
            // int cos^{2N-2} over (-pi/2, pi/2), smooth and compact.
            WeightKind::PolyN(n) => {
                let n = *n;
                let f = move |th: S| {
                    let cth = th.cos();
                    cth.powi(2 * n as i32 - 2)
                };
                adaptive_simpson(&f, -S::FRAC_PI_2(), S::FRAC_PI_2(), c::<S>(1e-13))
            }
            // Substitute x = sinh(t): integrand exp(-lambda cosh t) cosh t.
            WeightKind::ExpLambda(lambda) => {
                let l = *lambda;
                let f = move |t: S| (-(l * t.cosh())).exp() * t.cosh();
                let t_max = c::<S>((1500.0 / lambda.to_f64().unwrap()).max(4.0)).ln() + c::<S>(2.0);
                c::<S>(2.0) * adaptive_simpson(&f, S::zero(), t_max, c::<S>(1e-14))
            }
            WeightKind::Mollified { base, .. } => base.l1_norm,
            WeightKind::Truncated { base, radius } => {
                let lim = *radius + *radius;
                adaptive_simpson(&|x| base.eval(x) * cutoff(x / *radius), -lim, lim, c::<S>(1e-13))
            }
        }
    }

    pub fn eval(&self, x: S) -> S {
        match &self.kind {
            WeightKind::PolyN(n) => (S::one() + x * x).powi(-(*n as i32)),
            WeightKind::ExpLambda(lambda) => (-*lambda * (S::one() + x * x).sqrt()).exp(),
            WeightKind::Mollified { base, delta } => {
                let (nodes, wts) = gauss_legendre::<S>(MOLL_QUAD_PTS);
                let mut acc = S::zero();
                for (s, w) in nodes.iter().zip(&wts) {
                    acc += *w * bump(*s) * base.eval(x - *delta * *s);
                }
                acc
            }
            WeightKind::Truncated { base, radius } => base.eval(x) * cutoff(x / *radius),
        }
    }

    /// Analytic derivative.
    pub fn grad(&self, x: S) -> S {
        match &self.kind {
            WeightKind::PolyN(n) => {
                let phi = self.eval(x);
                -c::<S>(2.0 * *n as f64) * x / (S::one() + x * x) * phi
            }
            WeightKind::ExpLambda(lambda) => {
                let phi = self.eval(x);
                -*lambda * x / (S::one() + x * x).sqrt() * phi
            }
            WeightKind::Mollified { base, delta } => {
                let (nodes, wts) = gauss_legendre::<S>(MOLL_QUAD_PTS);
                let mut acc = S::zero();
                for (s, w) in nodes.iter().zip(&wts) {
                    acc += *w * bump(*s) * base.grad(x - *delta * *s);
                }
                acc
            }
            WeightKind::Truncated { base, radius } => {
                base.grad(x) * cutoff(x / *radius)
                    + base.eval(x) * cutoff_deriv(x / *radius) / *radius
            }
        }
    }

    /// Laplacian of a mollified weight, with derivatives moved onto the
    /// mollifier: `phi_delta'' = delta^{-2} int J''(s) phi(x - delta s) ds`.
    pub fn laplacian_mollified(&self, x: S) -> Result<S> {
        let WeightKind::Mollified { base, delta } = &self.kind else {
            return Err(Error::InvalidInput("laplacian_mollified needs a mollified weight".into()));
        };
        let (nodes, wts) = gauss_legendre::<S>(MOLL_QUAD_PTS);
        let mut acc = S::zero();
        for (s, w) in nodes.iter().zip(&wts) {
            acc += *w * bump_second_deriv(*s) * base.eval(x - *delta * *s);
        }
        Ok(acc / (*delta * *delta))
    }

    /// The continuity modulus of `phi^{1/p}`:
    /// `w_{p,phi}(r) = (C/p) r (1 + (C/p) r e^{C r / p})`.
    pub fn modulus(&self, p: S, r: S) -> S {
        debug_assert!(r >= S::zero());
        let q = self.c_phi / p;
        q * r * (S::one() + q * r * (q * r).exp())
    }

    /// Weight values sampled on a grid.
    pub fn sample(&self, grid: crate::grid::Grid1d<S>) -> Vec<S> {
        (0..grid.n_x()).map(|j| self.eval(grid.x(j))).collect()
    }

    /// Mass of the weight outside `[-l, l]`; reported next to torus norms so
    /// the truncation level is visible in every experiment record.
    pub fn tail_mass(&self, l: S) -> S {
        match &self.kind {
            WeightKind::Truncated { radius, .. } => {
                if l >= *radius + *radius {
                    S::zero()
                } else {
                    let lim = *radius + *radius;
                    c::<S>(2.0) * adaptive_simpson(&|x| self.eval(x), l, lim, c::<S>(1e-13))
                }
            }
            _ => {
                // Crude but safe upper cut for the improper tail.
                let hi = l.max(S::one()) * c::<S>(1e6);
                c::<S>(2.0) * adaptive_simpson(&|x| self.eval(x), l, hi, c::<S>(1e-13))
            }
        }
    }

    /// Check the class invariants on a grid: positivity and the
    /// finite-difference log-Lipschitz bound (skipped for truncated weights,
    /// which are validated against their uniform bounds instead).
    pub fn validate_on_grid(&self, grid: crate::grid::Grid1d<S>, tol_fd: S) -> Result<()> {
        let dx = grid.dx();
        if self.in_weight_class() {
            for j in 0..grid.n_x() {
                let x = grid.x(j);
                let phi = self.eval(x);
                if !(phi > S::zero()) {
                    return Err(Error::InvalidInput(format!(
                        "weight not positive at x = {x}"
                    )));
                }
                let fd = (self.eval(x + dx) - self.eval(x - dx)) / (dx + dx);
                if fd.abs() > (self.c_phi + tol_fd) * phi {
                    return Err(Error::InvalidInput(format!(
                        "log-Lipschitz bound violated at x = {x}: |grad| = {} > {}",
                        fd.abs(),
                        (self.c_phi + tol_fd) * phi
                    )));
                }
            }
            Ok(())
        } else {
            let WeightKind::Truncated { base, radius } = &self.kind else { unreachable!() };
            let zeta_grad_sup = crate::bump::cutoff_deriv_sup::<S>();
            let bound = base.c_phi() + zeta_grad_sup / *radius + tol_fd;
            for j in 0..grid.n_x() {
                let x = grid.x(j);
                if self.eval(x) > base.eval(x) * (S::one() + tol_fd) {
                    return Err(Error::InvalidInput("truncated weight exceeds base".into()));
                }
                if self.grad(x).abs() > bound * base.eval(x) {
                    return Err(Error::InvalidInput(
                        "truncated weight gradient bound violated".into(),
                    ));
                }
            }
            Ok(())
        }
    }
}

/// Parse a weight from its string key:
/// `poly:N`, `exp:lambda`, `moll:<base>:<delta>`, `trunc:<base>:<R>`.
pub fn parse_weight<S: Scalar>(spec: &str) -> Result<Weight<S>> {
    let bad = |m: &str| Error::Config(format!("weight spec `{spec}`: {m}"));
    if let Some(rest) = spec.strip_prefix("poly:") {
        let n: u32 = rest.parse().map_err(|_| bad("bad N"))?;
        return Weight::poly(n);
    }
    if let Some(rest) = spec.strip_prefix("exp:") {
        let l: f64 = rest.parse().map_err(|_| bad("bad lambda"))?;
        return Weight::exp_lambda(c::<S>(l));
    }
    for (prefix, is_moll) in [("moll:", true), ("trunc:", true)] {
        if let Some(rest) = spec.strip_prefix(prefix) {
            let (base_spec, param) = rest.rsplit_once(':').ok_or_else(|| bad("missing parameter"))?;
            let p: f64 = param.parse().map_err(|_| bad("bad parameter"))?;
            let base = parse_weight::<S>(base_spec)?;
            return if prefix == "moll:" {
                Weight::mollified(base, c::<S>(p))
            } else {
                Weight::truncated(base, c::<S>(p))
            };
        }
        let _ = is_moll;
    }
    Err(bad("unknown family"))
}

/// Canonical string key of a weight (inverse of [`parse_weight`]).
pub fn weight_key<S: Scalar>(w: &Weight<S>) -> String {
    match w.kind() {
        WeightKind::PolyN(n) => format!("poly:{n}"),
        WeightKind::ExpLambda(l) => format!("exp:{l}"),
        WeightKind::Mollified { base, delta } => format!("moll:{}:{delta}", weight_key(base)),
        WeightKind::Truncated { base, radius } => format!("trunc:{}:{radius}", weight_key(base)),
    }
}

/// `(int |u|^p phi dx)^{1/p}` on the grid.
///
/// Errors on non-finite field values.
pub fn weighted_lp_norm<S: Scalar>(u: &GridField<S>, p: S, w: &Weight<S>) -> Result<S> {
    if !u.is_finite() {
        return Err(Error::InvalidInput("field has non-finite values".into()));
    }
    Ok(lp_norm_sampled(u.values(), p, &w.sample(u.grid()), u.grid().dx()))
}

/// Same norm against precomputed weight samples; used in the hot paths.
#[inline]
pub fn lp_norm_sampled<S: Scalar>(values: &[S], p: S, phi: &[S], dx: S) -> S {
    debug_assert_eq!(values.len(), phi.len());
    let terms: Vec<S> = values
        .iter()
        .zip(phi)
        .map(|(&v, &f)| v.abs().powf(p) * f)
        .collect();
    (crate::stats::pairwise_sum(&terms) * dx).powf(S::one() / p)
}

/// `sup_x |h(x)| / phi(x)` over the grid.
pub fn weighted_linf_norm<S: Scalar>(h: &GridField<S>, w: &Weight<S>) -> S {
    let grid = h.grid();
    h.values()
        .iter()
        .enumerate()
        .fold(S::zero(), |m, (j, &v)| m.max(v.abs() / w.eval(grid.x(j))))
}

/// Both sides of the localised Young inequality
/// `|f * g|_{p,phi} <= (int |f| (1 + w_{p,phi}(|x|)) dx) |g|_{p,phi}`.
///
/// `f` must be compactly supported well inside the torus so that `|x|` is
/// unambiguous.
pub fn localized_young_bound<S: Scalar>(
    f: &GridField<S>,
    g: &GridField<S>,
    p: S,
    w: &Weight<S>,
) -> Result<(S, S)> {
    let grid = f.grid();
    if grid.n_x() != g.grid().n_x() {
        return Err(Error::InvalidInput("grids must match".into()));
    }
    let n = grid.n_x();
    let dx = grid.dx();
    // Discrete circular convolution dx * sum_j f(x_j) g(x_i - x_j); the
    // coordinate x_i - x_j = (i - j) dx sits at grid index i - j + n/2
    // because the grid starts at -L.
    let support: Vec<usize> =
        (0..n).filter(|&j| f.values()[j] != S::zero()).collect();
    let mut conv = vec![S::zero(); n];
    for (i, slot) in conv.iter_mut().enumerate() {
        let mut acc = S::zero();
        for &j in &support {
            acc += f.values()[j] * g.values()[(i + n + n / 2 - j) % n];
        }
        *slot = acc * dx;
    }
    let conv = GridField::from_values(grid, conv)?;
    let lhs = weighted_lp_norm(&conv, p, w)?;
    let factor_terms: Vec<S> = (0..n)
        .map(|j| {
            let x = grid.x(j);
            f.values()[j].abs() * (S::one() + w.modulus(p, x.abs()))
        })
        .collect();
    let factor = crate::stats::pairwise_sum(&factor_terms) * dx;
    let rhs = factor * weighted_lp_norm(g, p, w)?;
    Ok((lhs, rhs))
}
