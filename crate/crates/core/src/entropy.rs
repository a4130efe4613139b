//! Entropy pairs, the entropy functional with Malliavin-differentiable
//! random constants, and the entropy-inequality residual of the viscous
//! solver.
//!
//! The working family is the mollified Kruzkov pair
//!
//! ```text
//! S_delta'(v) = 2 int_0^v J_delta,   S_delta(0) = 0,
//! Q_delta(u, c) = int_c^u S_delta'(z - c) f'(z) dz,
//! ```
//!
//! evaluated through a cubic-Hermite table of the bump antiderivatives
//! (exact derivatives are available, so the table is accurate to ~1e-12).
//! The clipped power family backs the moment estimates.

use crate::bump::{bump, smooth_step, smooth_step_deriv};
use crate::grid::{Grid1d, GridField};
use crate::mc;
use crate::noise::NoisePath;
use crate::quad::gauss_legendre;
use crate::scalar::{c, cu, Scalar};
use crate::solver::{solve_with_observer, FluxFn, SolverConfig};
use crate::stats::{mean_ci95, MeanCi};
use crate::tolerances;
use crate::weights::Mollifier;
use crate::{Error, Result};
use std::sync::OnceLock;

// ---------------------------------------------------------------------------
// bump antiderivative table

struct BumpTable {
    n: usize,
    h: f64,
    /// B(y) = int_0^y J on [0, 1]
    b: Vec<f64>,
    /// C(y) = int_0^y B on [0, 1]
    cb: Vec<f64>,
}

static BUMP_TABLE: OnceLock<BumpTable> = OnceLock::new();

fn bump_table() -> &'static BumpTable {
    BUMP_TABLE.get_or_init(|| {
        let n = 2049usize;
        let h = 1.0 / (n - 1) as f64;
        let (nodes, wts) = gauss_legendre::<f64>(8);
        let seg = |f: &dyn Fn(f64) -> f64, a: f64, b_: f64| -> f64 {
            let half = (b_ - a) / 2.0;
            let mid = (a + b_) / 2.0;
            nodes.iter().zip(&wts).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
        };
        let mut b = vec![0.0; n];
        for i in 1..n {
            b[i] = b[i - 1] + seg(&|y| bump(y), (i - 1) as f64 * h, i as f64 * h);
        }
        // C from the cubic-Hermite interpolant of B (derivative J known)
        let b_interp = |y: f64, b: &[f64]| -> f64 {
            let i = ((y / h) as usize).min(n - 2);
            let t = (y - i as f64 * h) / h;
            let (f0, f1) = (b[i], b[i + 1]);
            let (d0, d1) = (bump(i as f64 * h), bump((i + 1) as f64 * h));
            f0 * (2.0 * t.powi(3) - 3.0 * t.powi(2) + 1.0)
                + f1 * (-2.0 * t.powi(3) + 3.0 * t.powi(2))
                + h * d0 * (t.powi(3) - 2.0 * t.powi(2) + t)
                + h * d1 * (t.powi(3) - t.powi(2))
        };
        let mut cb = vec![0.0; n];
        for i in 1..n {
            let bc = b.clone();
            cb[i] = cb[i - 1] + seg(&|y| b_interp(y, &bc), (i - 1) as f64 * h, i as f64 * h);
        }
        BumpTable { n, h, b, cb }
    })
}

impl BumpTable {
    fn hermite(&self, y: f64, vals: &[f64], deriv: &dyn Fn(f64) -> f64) -> f64 {
        let i = ((y / self.h) as usize).min(self.n - 2);
        let t = (y - i as f64 * self.h) / self.h;
        let (f0, f1) = (vals[i], vals[i + 1]);
        let (d0, d1) = (deriv(i as f64 * self.h), deriv((i + 1) as f64 * self.h));
        f0 * (2.0 * t.powi(3) - 3.0 * t.powi(2) + 1.0)
            + f1 * (-2.0 * t.powi(3) + 3.0 * t.powi(2))
            + self.h * d0 * (t.powi(3) - 2.0 * t.powi(2) + t)
            + self.h * d1 * (t.powi(3) - t.powi(2))
    }

    /// `B(y) = int_0^y J` with odd extension; saturates at 1/2.
    fn b_of(&self, y: f64) -> f64 {
        let a = y.abs();
        let v = if a >= 1.0 { 0.5 } else { self.hermite(a, &self.b, &bump::<f64>) };
        if y < 0.0 {
            -v
        } else {
            v
        }
    }

    /// `C(y) = int_0^y B` (even); linear growth past 1.
    fn c_of(&self, y: f64) -> f64 {
        let a = y.abs();
        if a >= 1.0 {
            self.cb[self.n - 1] + (a - 1.0) / 2.0
        } else {
            self.hermite(a, &self.cb, &|s| self.b_of(s))
        }
    }
}

// ---------------------------------------------------------------------------
// entropy pairs

/// Built-in entropy families (convex, `S(0) = 0`, bounded `S'`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropyPair<S: Scalar> {
    /// Mollified Kruzkov entropy: `S' = 2 int_0^. J_delta`, `S'' = 2 J_delta`.
    SDelta { delta: S },
    /// `|u|^p` with the slope clipped at `|u| = radius` (linear growth
    /// beyond), for even integer `p >= 2`.
    SR { radius: S, p: u32 },
}

impl<S: Scalar> EntropyPair<S> {
    pub fn s_delta(delta: S) -> Result<Self> {
        if !(delta > S::zero()) {
            return Err(Error::InvalidInput("entropy smoothing must be positive".into()));
        }
        Ok(EntropyPair::SDelta { delta })
    }

    pub fn s_r(radius: S, p: u32) -> Result<Self> {
        if !(radius > S::zero()) || p < 2 || p % 2 != 0 {
            return Err(Error::InvalidInput("clipped power needs radius > 0, even p >= 2".into()));
        }
        Ok(EntropyPair::SR { radius, p })
    }

    pub fn s(&self, v: S) -> S {
        match *self {
            EntropyPair::SDelta { delta } => {
                let y = (v / delta).to_f64().unwrap();
                c::<S>(2.0) * delta * c::<S>(bump_table().c_of(y))
            }
            EntropyPair::SR { radius, p } => {
                let a = v.abs();
                let pi = p as i32;
                if a <= radius {
                    a.powi(pi)
                } else {
                    radius.powi(pi) + cu::<S>(p as usize) * radius.powi(pi - 1) * (a - radius)
                }
            }
        }
    }

    pub fn s_prime(&self, v: S) -> S {
        match *self {
            EntropyPair::SDelta { delta } => {
                let y = (v / delta).to_f64().unwrap();
                c::<S>(2.0) * c::<S>(bump_table().b_of(y))
            }
            EntropyPair::SR { radius, p } => {
                let clipped = v.max(-radius).min(radius);
                cu::<S>(p as usize) * clipped.abs().powi(p as i32 - 1) * clipped.signum()
            }
        }
    }

    pub fn s_second(&self, v: S) -> S {
        match *self {
            EntropyPair::SDelta { delta } => {
                c::<S>(2.0) * bump(v / delta) / delta
            }
            EntropyPair::SR { radius, p } => {
                if v.abs() <= radius {
                    cu::<S>((p * (p - 1)) as usize) * v.abs().powi(p as i32 - 2)
                } else {
                    S::zero()
                }
            }
        }
    }

    /// `sup |S'|`.
    pub fn lip(&self) -> S {
        match *self {
            EntropyPair::SDelta { .. } => S::one(),
            EntropyPair::SR { radius, p } => cu::<S>(p as usize) * radius.powi(p as i32 - 1),
        }
    }

    /// Width of `supp(S'')` around zero, if compact.
    pub fn second_support(&self) -> Option<S> {
        match *self {
            EntropyPair::SDelta { delta } => Some(delta),
            EntropyPair::SR { .. } => None,
        }
    }
}

/// Saturated flux correction `int_0^{clamp(w, -delta, delta)} S''(s) (f(c+s) - f(c)) ds`
/// used by the integration-by-parts form of `Q_delta`.
fn sdelta_correction<S: Scalar>(pair: &EntropyPair<S>, flux: &FluxFn<S>, c_val: S, w: S) -> S {
    let EntropyPair::SDelta { delta } = *pair else { unreachable!() };
    let lim = w.max(-delta).min(delta);
    if lim == S::zero() {
        return S::zero();
    }
    // composite rule: the bump integrand is flat at its endpoints, one
    // Gauss panel converges slowly there
    let (nodes, wts) = gauss_legendre::<S>(16);
    let f_c = flux.value(c_val);
    let panels = 4;
    let mut acc = S::zero();
    for p in 0..panels {
        let a = lim * cu::<S>(p) / cu::<S>(panels);
        let b = lim * cu::<S>(p + 1) / cu::<S>(panels);
        let half = (b - a) / c::<S>(2.0);
        let mid = (a + b) / c::<S>(2.0);
        let mut seg = S::zero();
        for (x, wq) in nodes.iter().zip(&wts) {
            let s = mid + half * *x;
            seg += *wq * pair.s_second(s) * (flux.value(c_val + s) - f_c);
        }
        acc += seg * half;
    }
    acc
}

/// Entropy flux `Q(u, c) = int_c^u S'(z - c) f'(z) dz` (exactly compatible
/// with the pair: `d/du Q = S'(u - c) f'(u)`, `Q(c, c) = 0`).
pub fn q_flux<S: Scalar>(pair: &EntropyPair<S>, flux: &FluxFn<S>, u: S, c_val: S) -> S {
    match pair {
        EntropyPair::SDelta { .. } => {
            // integration by parts: S'(u-c)(f(u)-f(c)) - int S''(z-c)(f(z)-f(c))
            let w = u - c_val;
            pair.s_prime(w) * (flux.value(u) - flux.value(c_val))
                - sdelta_correction(pair, flux, c_val, w)
        }
        EntropyPair::SR { radius, .. } => {
            // direct composite quadrature with panels split at the clip kinks
            let mut brk = vec![c_val, u];
            for kink in [-*radius + c_val, *radius + c_val] {
                if (kink - c_val) * (kink - u) < S::zero() {
                    brk.push(kink);
                }
            }
            brk.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if u < c_val {
                brk.reverse();
            }
            let (nodes, wts) = gauss_legendre::<S>(24);
            let mut total = S::zero();
            for pair_pts in brk.windows(2) {
                let (a, b) = (pair_pts[0], pair_pts[1]);
                let half = (b - a) / c::<S>(2.0);
                let mid = (a + b) / c::<S>(2.0);
                let mut seg = S::zero();
                for (x, wq) in nodes.iter().zip(&wts) {
                    let z = mid + half * *x;
                    seg += *wq * pair.s_prime(z - c_val) * flux.deriv(z);
                }
                total += seg * half;
            }
            total
        }
    }
}

// ---------------------------------------------------------------------------
// space-time test functions

/// Nonnegative separable test function `theta(t) chi(x)`, compactly
/// supported in `[0, t_end) x torus`, with analytic `d_t`, `d_x`, `d_xx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeTest<S: Scalar> {
    /// Spatial plateau profile `chi`.
    pub plateau: crate::bump::Plateau1d<S>,
    /// `theta = 1` on `[0, t_plateau]`, smoothly 0 at `t_end`.
    pub t_plateau: S,
    pub t_end: S,
}

impl<S: Scalar> SpaceTimeTest<S> {
    pub fn new(
        grid: Grid1d<S>,
        amp: S,
        t_plateau: S,
        t_end: S,
        x_center: S,
        x_half: S,
        x_edge: S,
    ) -> Result<Self> {
        if !(amp >= S::zero()) || !(t_plateau < t_end) || !(x_half > S::zero()) || !(x_edge > S::zero())
        {
            return Err(Error::InvalidInput("bad test function parameters".into()));
        }
        if x_half + x_edge >= grid.half_width() {
            return Err(Error::InvalidInput("test support must fit inside the torus".into()));
        }
        Ok(Self {
            plateau: crate::bump::Plateau1d {
                amp,
                center: x_center,
                half: x_half,
                edge: x_edge,
                period_half: grid.half_width(),
            },
            t_plateau,
            t_end,
        })
    }

    #[inline]
    fn theta_arg(&self, t: S) -> S {
        (t - self.t_plateau) / (self.t_end - self.t_plateau)
    }

    pub fn theta(&self, t: S) -> S {
        smooth_step(self.theta_arg(t))
    }

    pub fn theta_dt(&self, t: S) -> S {
        smooth_step_deriv(self.theta_arg(t)) / (self.t_end - self.t_plateau)
    }

    pub fn chi(&self, x: S) -> S {
        self.plateau.value(x)
    }

    pub fn chi_dx(&self, x: S) -> S {
        self.plateau.deriv(x)
    }

    pub fn chi_dxx(&self, x: S) -> S {
        self.plateau.second_deriv(x)
    }

    pub fn value(&self, t: S, x: S) -> S {
        self.theta(t) * self.chi(x)
    }

    pub fn random(grid: Grid1d<S>, horizon: S, rng: &mut impl rand::Rng) -> Self {
        let l = grid.half_width().to_f64().unwrap();
        let t_end = horizon * c::<S>(rng.gen_range(0.6..0.95));
        let t_plateau = t_end * c::<S>(rng.gen_range(0.3..0.8));
        Self {
            plateau: crate::bump::Plateau1d {
                amp: c::<S>(rng.gen_range(0.5..2.0)),
                center: c::<S>(rng.gen_range(-0.4 * l..0.4 * l)),
                half: c::<S>(rng.gen_range(0.1 * l..0.3 * l)),
                edge: c::<S>(rng.gen_range(0.1 * l..0.25 * l)),
                period_half: grid.half_width(),
            },
            t_plateau,
            t_end,
        }
    }
}

// ---------------------------------------------------------------------------
// entropy functional and residual

/// The four terms of the entropy functional plus the viscous correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyTerms<S> {
    /// `int S(u0 - V) test(0, x) dx`
    pub initial: S,
    /// `int int S(u - V) d_t test + Q(u, V) d_x test`
    pub transport: S,
    /// `int int int_Z S''(u - V) sigma D_{t,z}V test dmu`, entering with a
    /// minus sign.
    pub malliavin_cross: S,
    /// `1/2 int int int_Z S''(u - V) sigma^2 test dmu`
    pub quadratic: S,
    /// `eps int int S(u - V) (d_xx test)`
    pub eps_term: S,
}

impl<S: Scalar> EntropyTerms<S> {
    /// The entropy functional (no viscous correction).
    pub fn functional(&self) -> S {
        self.initial + self.transport - self.malliavin_cross + self.quadratic
    }

    /// Left-hand side of the viscous entropy inequality.
    pub fn residual(&self) -> S {
        self.functional() + self.eps_term
    }
}

/// Strided left-point time sampling: pairs `(step, weight)` covering
/// `[0, n_steps) dt`.
pub fn stride_weights<S: Scalar>(n_steps: usize, stride: usize, dt: S) -> Vec<(usize, S)> {
    let mut out = Vec::with_capacity(n_steps / stride + 1);
    let mut n = 0;
    while n < n_steps {
        let span = stride.min(n_steps - n);
        out.push((n, dt * cu::<S>(span)));
        n += span;
    }
    out
}

/// Evaluate the entropy terms for one path, streaming over the solve.
///
/// `stride` controls the time quadrature of the space-time integrals (1 =
/// every step); the integrands are smooth in time on O(1) scales so modest
/// strides only move work, not accuracy, at desk scale.
pub fn entropy_terms_for_path<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    path: &NoisePath<S>,
    pair: &EntropyPair<S>,
    test: &SpaceTimeTest<S>,
    v_rv: &crate::malliavin::SmoothRv<S>,
    stride: usize,
) -> Result<EntropyTerms<S>> {
    if test.t_end > cfg.horizon() {
        return Err(Error::InvalidInput("test function must vanish before the horizon".into()));
    }
    let grid = cfg.grid;
    let n_x = grid.n_x();
    let dx = grid.dx();
    let (v, d_v) = v_rv.eval_with_derivative(path);
    // per-cell static profiles
    let chi: Vec<S> = (0..n_x).map(|j| test.chi(grid.x(j))).collect();
    let chi_dx: Vec<S> = (0..n_x).map(|j| test.chi_dx(grid.x(j))).collect();
    let chi_dxx: Vec<S> = (0..n_x).map(|j| test.chi_dxx(grid.x(j))).collect();
    let mod_profile: Vec<S> = (0..n_x).map(|j| cfg.sigma.x_factor(grid.x(j))).collect();
    // sum_k mu_k g_k^2 and per-step sum_k mu_k g_k D[n][k]
    let g2: S = {
        let terms: Vec<S> = cfg
            .sigma
            .node_amplitudes()
            .iter()
            .zip(cfg.space.mu())
            .map(|(&g, &mu)| mu * g * g)
            .collect();
        crate::stats::pairwise_sum(&terms)
    };
    let f_v = cfg.flux.value(v);
    let delta_opt = pair.second_support();
    // saturated flux corrections for the Kruzkov family
    let (corr_plus, corr_minus) = match pair {
        EntropyPair::SDelta { delta } => (
            sdelta_correction(pair, &cfg.flux, v, *delta),
            sdelta_correction(pair, &cfg.flux, v, -*delta),
        ),
        _ => (S::zero(), S::zero()),
    };
    let q_of = |u: S| -> S {
        match pair {
            EntropyPair::SDelta { delta } => {
                let w = u - v;
                let corr = if w >= *delta {
                    corr_plus
                } else if w <= -*delta {
                    corr_minus
                } else {
                    sdelta_correction(pair, &cfg.flux, v, w)
                };
                pair.s_prime(w) * (cfg.flux.value(u) - f_v) - corr
            }
            _ => q_flux(pair, &cfg.flux, u, v),
        }
    };

    let weights = stride_weights(cfg.n_steps, stride, cfg.dt);
    let mut widx = 0usize;
    let mut initial = S::zero();
    let mut transport = S::zero();
    let mut cross = S::zero();
    let mut quadratic = S::zero();
    let mut eps_term = S::zero();
    let half = c::<S>(0.5);
    solve_with_observer(cfg, u0, path, |n, t, u| {
        if n == 0 {
            let theta0 = test.theta(S::zero());
            let mut acc = S::zero();
            for j in 0..n_x {
                acc += pair.s(u[j] - v) * chi[j];
            }
            initial = acc * theta0 * dx;
        }
        if widx >= weights.len() || weights[widx].0 != n {
            return;
        }
        let w_t = weights[widx].1;
        widx += 1;
        let theta = test.theta(t);
        let theta_dt = test.theta_dt(t);
        if theta == S::zero() && theta_dt == S::zero() {
            return;
        }
        let d_sum = d_v.as_ref().map(|d| {
            let terms: Vec<S> = cfg
                .sigma
                .node_amplitudes()
                .iter()
                .zip(cfg.space.mu())
                .enumerate()
                .map(|(k, (&g, &mu))| mu * g * d.get(n, k))
                .collect();
            crate::stats::pairwise_sum(&terms)
        });
        let mut row_s_dt = S::zero();
        let mut row_q = S::zero();
        let mut row_cross = S::zero();
        let mut row_quad = S::zero();
        let mut row_eps = S::zero();
        for j in 0..n_x {
            let w = u[j] - v;
            let s_val = pair.s(w);
            row_s_dt += s_val * chi[j];
            row_eps += s_val * chi_dxx[j];
            if chi_dx[j] != S::zero() {
                row_q += q_of(u[j]) * chi_dx[j];
            }
            let near = delta_opt.map_or(true, |d| w.abs() < d);
            if near {
                let s2 = pair.s_second(w);
                if s2 != S::zero() {
                    let sfac = cfg.sigma.u_factor(u[j]) * mod_profile[j];
                    if let Some(ds) = d_sum {
                        row_cross += s2 * sfac * ds * chi[j];
                    }
                    row_quad += s2 * sfac * sfac * g2 * chi[j];
                }
            }
        }
        transport += (row_s_dt * theta_dt + row_q * theta) * w_t * dx;
        cross += row_cross * theta * w_t * dx;
        quadratic += half * row_quad * theta * w_t * dx;
        eps_term += cfg.eps * row_eps * theta * w_t * dx;
    })?;
    Ok(EntropyTerms { initial, transport, malliavin_cross: cross, quadratic, eps_term })
}

/// Monte Carlo estimate of the entropy functional (without the viscous
/// correction term).
#[allow(clippy::too_many_arguments)]
pub fn entropy_functional<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    pair: &EntropyPair<S>,
    test: &SpaceTimeTest<S>,
    v_rv: &crate::malliavin::SmoothRv<S>,
    n_mc: usize,
    seed: u64,
    stride: usize,
) -> Result<MeanCi<S>> {
    let vals: Vec<S> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        Ok(entropy_terms_for_path(cfg, u0, &path, pair, test, v_rv, stride)?.functional())
    })?;
    Ok(mean_ci95(&vals))
}

/// One entropy-inequality check: the Monte Carlo residual of the viscous
/// entropy inequality and its frozen tolerance budget.
#[derive(Debug, Clone, Copy)]
pub struct ResidualReport<S> {
    pub residual: MeanCi<S>,
    /// `c1 dx + c2 dt + 3 SE + c3 eps`.
    pub tol: S,
}

impl<S: Scalar> ResidualReport<S> {
    pub fn passes(&self) -> bool {
        self.residual.mean >= -self.tol
    }
}

/// Monte Carlo left-hand side of the viscous entropy inequality; asserts
/// nothing, returns the residual and its budget.
#[allow(clippy::too_many_arguments)]
pub fn viscous_entropy_residual<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    pair: &EntropyPair<S>,
    test: &SpaceTimeTest<S>,
    v_rv: &crate::malliavin::SmoothRv<S>,
    n_mc: usize,
    seed: u64,
    stride: usize,
) -> Result<ResidualReport<S>> {
    let vals: Vec<S> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        Ok(entropy_terms_for_path(cfg, u0, &path, pair, test, v_rv, stride)?.residual())
    })?;
    let residual = mean_ci95(&vals);
    let tol = c::<S>(tolerances::entropy_residual::C1_DX) * cfg.grid.dx()
        + c::<S>(tolerances::entropy_residual::C2_DT) * cfg.dt
        + c::<S>(3.0) * residual.se
        + c::<S>(tolerances::entropy_residual::C3_EPS) * cfg.eps;
    Ok(ResidualReport { residual, tol })
}

/// Initial-condition statistic: for each mollifier radius,
/// `T_{r0} = E int int S(u(t,x) - u0(x)) psi(x) J+_{r0}(t) dx dt`,
/// with mass-normalised discrete kernels.
pub fn initial_condition_stat<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    pair: &EntropyPair<S>,
    psi: &GridField<S>,
    r0_list: &[S],
    n_mc: usize,
    seed: u64,
) -> Result<Vec<(S, MeanCi<S>)>> {
    for &r0 in r0_list {
        if r0 < cfg.dt {
            return Err(Error::InvalidInput(format!("radius {r0} below the time step")));
        }
    }
    let r0_max = r0_list.iter().fold(S::zero(), |m, &v| m.max(v));
    let window = (r0_max / cfg.dt).to_f64().unwrap().ceil() as usize * 2;
    if window > cfg.n_steps {
        return Err(Error::Config("kernel window extends past the horizon".into()));
    }
    let mut short_cfg = cfg.clone();
    short_cfg.n_steps = window;
    let kernels: Vec<Vec<S>> = r0_list
        .iter()
        .map(|&r0| {
            let jr = Mollifier::new_shifted(r0).unwrap();
            let raw: Vec<S> = (0..=window).map(|i| jr.eval(cfg.dt * cu::<S>(i))).collect();
            let mass = crate::stats::pairwise_sum(&raw);
            raw.iter().map(|&v| v / mass).collect()
        })
        .collect();
    let dx = cfg.grid.dx();
    let n_x = cfg.grid.n_x();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, window, seed, i as u64)?;
        let mut stats = vec![S::zero(); r0_list.len()];
        solve_with_observer(&short_cfg, u0, &path, |n, _, u| {
            let mut row = S::zero();
            for j in 0..n_x {
                row += pair.s(u[j] - u0.values()[j]) * psi.values()[j];
            }
            for (ri, kern) in kernels.iter().enumerate() {
                stats[ri] += kern[n] * row * dx;
            }
        })?;
        Ok(stats)
    })?;
    Ok(r0_list
        .iter()
        .enumerate()
        .map(|(ri, &r0)| {
            let vals: Vec<S> = per_sample.iter().map(|s| s[ri]).collect();
            (r0, mean_ci95(&vals))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::malliavin::{CellField, OuterFn, SmoothRv};
    use crate::noise::{NoiseSpace, SigmaCoeff, SigmaFamily};
    use crate::solver::Scheme;
    use crate::weights::Weight;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg_with(
        eps: f64,
        flux: FluxFn<f64>,
        family: SigmaFamily,
        g: f64,
        n_steps: usize,
    ) -> SolverConfig<f64> {
        let grid = Grid1d::new(256, 10.0).unwrap();
        let space = NoiseSpace::uniform(4).unwrap();
        let sigma = SigmaCoeff::new(family, g, &space, 10.0).unwrap();
        SolverConfig {
            grid,
            eps,
            dt: 2e-4,
            n_steps,
            flux,
            sigma,
            space,
            weight: Weight::poly(3).unwrap(),
            scheme: Scheme::ExpEuler,
        }
    }

    fn default_test_fn(grid: Grid1d<f64>, horizon: f64) -> SpaceTimeTest<f64> {
        SpaceTimeTest::new(grid, 1.0, 0.4 * horizon, 0.8 * horizon, 0.0, 3.0, 2.0).unwrap()
    }

    #[test]
    fn sdelta_shape() {
        let p = EntropyPair::<f64>::s_delta(0.1).unwrap();
        assert_eq!(p.s(0.0), 0.0);
        // |S_delta(v) - |v|| <= delta and exact linearity past delta
        for &v in &[-2.0, -0.5, -0.05, 0.02, 0.3, 4.0] {
            assert!((p.s(v) - v.abs()).abs() <= 0.1 + 1e-12, "v = {v}");
            assert!(p.s(v) >= 0.0);
        }
        // S' odd, bounded by 1, S'' = 2 J_delta >= 0 supported in (-delta, delta)
        for &v in &[-0.2, -0.07, 0.001, 0.04, 0.09, 0.5] {
            assert_relative_eq!(p.s_prime(v), -p.s_prime(-v), epsilon = 1e-14);
            assert!(p.s_prime(v).abs() <= 1.0);
            assert!(p.s_second(v) >= 0.0);
            if v.abs() >= 0.1 {
                assert_eq!(p.s_second(v), 0.0);
            }
        }
        assert_relative_eq!(p.s_second(0.03), 2.0 * bump(0.3) / 0.1, max_relative = 1e-12);
    }

    #[test]
    fn sdelta_table_matches_quadrature() {
        let p = EntropyPair::<f64>::s_delta(0.25).unwrap();
        for &v in &[0.02, 0.1, 0.2, 0.24] {
            let direct = 2.0 * crate::quad::adaptive_simpson(
                &|z: f64| bump(z / 0.25) / 0.25,
                0.0,
                v,
                1e-13,
            );
            assert_relative_eq!(p.s_prime(v), direct, epsilon = 1e-10);
            let s_direct = crate::quad::adaptive_simpson(
                &|z: f64| p.s_prime(z),
                0.0,
                v,
                1e-13,
            );
            assert_relative_eq!(p.s(v), s_direct, epsilon = 1e-9);
        }
    }

    #[test]
    fn sr_pair_shape() {
        let p = EntropyPair::<f64>::s_r(2.0, 4).unwrap();
        assert_eq!(p.s(0.0), 0.0);
        assert_relative_eq!(p.s(1.5), 1.5f64.powi(4));
        // linear growth with matching slope past the clip
        assert_relative_eq!(p.s(3.0), 16.0 + 4.0 * 8.0 * 1.0);
        assert_relative_eq!(p.s_prime(5.0), 4.0 * 8.0);
        assert_eq!(p.s_second(5.0), 0.0);
        assert!(EntropyPair::<f64>::s_r(2.0, 3).is_err());
    }

    #[test]
    fn q_flux_vanishes_on_diagonal() {
        let f = FluxFn::<f64>::BurgersClipped { u_max: 2.0 };
        for pair in [
            EntropyPair::<f64>::s_delta(0.1).unwrap(),
            EntropyPair::<f64>::s_r(1.5, 2).unwrap(),
        ] {
            assert_eq!(q_flux(&pair, &f, 0.7, 0.7), 0.0);
        }
    }

    #[test]
    fn q_flux_lipschitz_bound() {
        let f = FluxFn::<f64>::SmoothSin { a: 1.3 };
        let pair = EntropyPair::<f64>::s_delta(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        for _ in 0..200 {
            let u: f64 = rng.gen_range(-3.0..3.0);
            let cc: f64 = rng.gen_range(-3.0..3.0);
            let q = q_flux(&pair, &f, u, cc);
            assert!(q.abs() <= pair.lip() * f.lip() * (u - cc).abs() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn q_flux_linear_closed_form() {
        // f(u) = a u gives Q_delta(u, c) = a S_delta(u - c).
        let a = 1.7;
        let f = FluxFn::<f64>::Linear { a };
        let pair = EntropyPair::<f64>::s_delta(0.15).unwrap();
        for &(u, cc) in &[(0.9, 0.2), (-0.4, 0.3), (0.05, 0.0), (2.0, -1.0)] {
            assert_relative_eq!(
                q_flux(&pair, &f, u, cc),
                a * pair.s(u - cc),
                epsilon = 1e-10,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn q_flux_compatibility_derivative() {
        // d/du Q(u, c) = S'(u - c) f'(u)
        let f = FluxFn::<f64>::BurgersClipped { u_max: 1.5 };
        for pair in [
            EntropyPair::<f64>::s_delta(0.2).unwrap(),
            EntropyPair::<f64>::s_r(1.0, 2).unwrap(),
        ] {
            for &(u, cc) in &[(0.8, 0.3), (-0.6, 0.1), (0.35, 0.3)] {
                let h = 1e-6;
                let fd = (q_flux(&pair, &f, u + h, cc) - q_flux(&pair, &f, u - h, cc)) / (2.0 * h);
                assert_relative_eq!(
                    fd,
                    pair.s_prime(u - cc) * f.deriv(u),
                    epsilon = 1e-6,
                    max_relative = 1e-5
                );
            }
        }
    }

    #[test]
    fn sr_q_bound() {
        // |Q_R(u, c)| <= |f|_Lip |u - c|^p
        let f = FluxFn::<f64>::SmoothSin { a: 0.9 };
        let pair = EntropyPair::<f64>::s_r(2.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        use rand::Rng;
        for _ in 0..100 {
            let u: f64 = rng.gen_range(-1.8..1.8);
            let cc: f64 = rng.gen_range(-1.8..1.8);
            let q = q_flux(&pair, &f, u, cc);
            assert!(q.abs() <= f.lip() * (u - cc).powi(2) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn test_function_derivatives() {
        let grid = Grid1d::<f64>::new(256, 10.0).unwrap();
        let t = SpaceTimeTest::new(grid, 1.3, 0.1, 0.35, 1.0, 2.5, 1.5).unwrap();
        let h = 1e-6;
        for &x in &[-5.0, -2.0, 1.0, 2.8, 4.4] {
            let fd = (t.chi(x + h) - t.chi(x - h)) / (2.0 * h);
            assert_relative_eq!(t.chi_dx(x), fd, epsilon = 1e-5, max_relative = 1e-4);
            let h2 = 1e-5;
            let fd2 = (t.chi(x + h2) - 2.0 * t.chi(x) + t.chi(x - h2)) / (h2 * h2);
            assert_relative_eq!(t.chi_dxx(x), fd2, epsilon = 1e-3, max_relative = 1e-3);
        }
        for &tt in &[0.05, 0.15, 0.25, 0.33] {
            let fd = (t.theta(tt + h) - t.theta(tt - h)) / (2.0 * h);
            assert_relative_eq!(t.theta_dt(tt), fd, epsilon = 1e-5, max_relative = 1e-4);
        }
        // nonnegative, compactly supported
        assert!(t.value(0.0, 1.0) > 0.0);
        assert_eq!(t.value(0.36, 1.0), 0.0);
        assert_eq!(t.value(0.0, 5.1), 0.0);
        assert!(SpaceTimeTest::new(grid, 1.0, 0.1, 0.3, 0.0, 8.0, 3.0).is_err());
    }

    #[test]
    fn zero_test_function_gives_zero() {
        let cfg = cfg_with(0.05, FluxFn::Linear { a: 0.5 }, SigmaFamily::MultSin, 0.4, 100);
        let mut test = default_test_fn(cfg.grid, cfg.horizon());
        test.plateau.amp = 0.0;
        let u0 = GridField::from_fn(cfg.grid, |x| 0.5 * (x / 3.0).sin());
        let pair = EntropyPair::s_delta(0.05).unwrap();
        let v = SmoothRv::constant(0.2);
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 5, 0).unwrap();
        let terms = entropy_terms_for_path(&cfg, &u0, &path, &pair, &test, &v, 1).unwrap();
        assert_eq!(terms.functional(), 0.0);
        assert_eq!(terms.residual(), 0.0);
    }

    #[test]
    fn constant_v_kills_cross_term() {
        let cfg = cfg_with(0.05, FluxFn::BurgersClipped { u_max: 1.5 }, SigmaFamily::MultSin, 0.5, 100);
        let test = default_test_fn(cfg.grid, cfg.horizon());
        let u0 = GridField::from_fn(cfg.grid, |x| 0.6 * (x / 4.0).cos());
        let pair = EntropyPair::s_delta(0.3).unwrap();
        let v = SmoothRv::constant(0.1);
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 6, 0).unwrap();
        let terms = entropy_terms_for_path(&cfg, &u0, &path, &pair, &test, &v, 1).unwrap();
        assert_eq!(terms.malliavin_cross, 0.0);
        assert!(terms.quadratic > 0.0);
    }

    #[test]
    fn deterministic_residual_nonnegative() {
        // sigma = 0: classical parabolic entropy production; residual is
        // nonnegative up to the discretisation budget.
        let cfg = cfg_with(0.05, FluxFn::BurgersClipped { u_max: 1.5 }, SigmaFamily::Additive, 0.0, 500);
        let test = default_test_fn(cfg.grid, cfg.horizon());
        let u0 = GridField::from_fn(cfg.grid, |x| 0.8 * (std::f64::consts::PI * x / 10.0).sin());
        let pair = EntropyPair::s_delta(0.1).unwrap();
        let v = SmoothRv::constant(0.25);
        let rep = viscous_entropy_residual(&cfg, &u0, &pair, &test, &v, 1, 3, 1).unwrap();
        assert!(rep.passes(), "residual {} tol {}", rep.residual.mean, rep.tol);
    }

    #[test]
    fn linear_range_residual_is_weak_form_identity() {
        // V far outside the solution range with a small delta: S'' = 0
        // along the trajectory, the inequality degenerates to the weak-form
        // identity, so the residual sits at the discretisation floor.
        let cfg = cfg_with(0.05, FluxFn::Linear { a: 0.6 }, SigmaFamily::Additive, 0.0, 400);
        let test = default_test_fn(cfg.grid, cfg.horizon());
        let u0 = GridField::from_fn(cfg.grid, |x| 0.4 * (std::f64::consts::PI * x / 10.0).sin());
        let pair = EntropyPair::s_delta(0.05).unwrap();
        let v = SmoothRv::constant(5.0); // |u - V| >> delta everywhere
        let rep = viscous_entropy_residual(&cfg, &u0, &pair, &test, &v, 1, 3, 1).unwrap();
        assert!(rep.residual.mean.abs() <= rep.tol, "{} vs {}", rep.residual.mean, rep.tol);
    }

    #[test]
    fn randomized_v_residuals_nonnegative() {
        let cfg = cfg_with(0.05, FluxFn::BurgersClipped { u_max: 1.5 }, SigmaFamily::MultSin, 0.4, 300);
        let u0 = GridField::from_fn(cfg.grid, |x| 0.7 + 0.4 * (x / 3.0).sin());
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        use rand::Rng;
        for trial in 0..3 {
            let test = SpaceTimeTest::random(cfg.grid, cfg.horizon(), &mut rng);
            let pair = EntropyPair::s_delta(rng.gen_range(0.05..0.3)).unwrap();
            let h = CellField::from_fn(cfg.n_steps, 4, cfg.dt, |t, k| {
                (3.0 * t).cos() * (1.0 + 0.2 * k as f64)
            });
            let v = SmoothRv::new(OuterFn::Tanh { scale: rng.gen_range(0.2..0.8) }, vec![h]).unwrap();
            let rep = viscous_entropy_residual(&cfg, &u0, &pair, &test, &v, 60, 1000 + trial, 2).unwrap();
            assert!(rep.passes(), "trial {trial}: residual {} tol {}", rep.residual.mean, rep.tol);
        }
    }

    #[test]
    fn initial_condition_frozen_state_gives_zero() {
        // eps = 0, f = 0, sigma = 0: the trajectory never moves.
        let cfg = cfg_with(0.0, FluxFn::Linear { a: 0.0 }, SigmaFamily::Additive, 0.0, 100);
        let u0 = GridField::from_fn(cfg.grid, |x| 0.5 * (x / 2.0).cos());
        let psi = GridField::from_fn(cfg.grid, |x| if x.abs() < 5.0 { 1.0 } else { 0.0 });
        let pair = EntropyPair::s_delta(0.05).unwrap();
        let stats =
            initial_condition_stat(&cfg, &u0, &pair, &psi, &[8.0 * cfg.dt, 2.0 * cfg.dt], 2, 1)
                .unwrap();
        for (_, ci) in stats {
            assert_eq!(ci.mean, 0.0);
        }
    }

    #[test]
    fn initial_condition_heat_flow_decays() {
        // entropy smoothing far below the trajectory increments, so S is
        // effectively |.| and the deterministic decay is O(r0)
        let mut cfg = cfg_with(0.5, FluxFn::Linear { a: 0.0 }, SigmaFamily::Additive, 0.0, 64);
        cfg.dt = 1e-3;
        let u0 = GridField::from_fn(cfg.grid, |x| (std::f64::consts::PI * x / 10.0).sin());
        let psi = GridField::from_fn(cfg.grid, |x| (1.0 + (x / 3.0).cos()) / 2.0);
        let pair = EntropyPair::s_delta(1e-6).unwrap();
        let r0s = [8e-3, 4e-3, 2e-3];
        let stats = initial_condition_stat(&cfg, &u0, &pair, &psi, &r0s, 1, 1).unwrap();
        let vals: Vec<f64> = stats.iter().map(|(_, ci)| ci.mean).collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
        // roughly linear decay in r0 for the smooth deterministic flow
        let ratio = vals[0] / vals[2];
        assert!(ratio > 2.5 && ratio < 6.0, "ratio {ratio}");
    }

    #[test]
    fn rejects_radius_below_dt() {
        let cfg = cfg_with(0.05, FluxFn::Linear { a: 0.0 }, SigmaFamily::Additive, 0.0, 50);
        let u0 = GridField::zeros(cfg.grid);
        let psi = GridField::from_fn(cfg.grid, |_| 1.0);
        let pair = EntropyPair::s_delta(0.05).unwrap();
        assert!(initial_condition_stat(&cfg, &u0, &pair, &psi, &[1e-5], 1, 1).is_err());
    }
}
