//! Malliavin derivative of the viscous solution.
//!
//! For a fixed increment cell `(r, z_k)` the derivative `w = D_{r,z_k} u`
//! satisfies the linearised equation
//!
//! ```text
//! dw + d/dx (f'(u) w) dt = \int_Z d_u sigma(x, u, z') w W(dt, dz') + eps w_xx dt,
//! w(r) = sigma(., u(r), z_k),   w(t) = 0 for t < r.
//! ```
//!
//! The tangent solver below is the exact derivative of the discrete scheme:
//! the flux is the linearised Lax-Friedrichs divergence, the noise term uses
//! the same increments as the base path, and all coefficients are frozen on
//! the stored base trajectory. A Cameron-Martin shift of a single increment
//! provides an independent finite-difference oracle; the difference quotient
//! approximates the average of `D` over the shifted cell, not a pointwise
//! value.

use crate::grid::{Grid1d, GridField};
use crate::heat::HeatPlan;
use crate::mc;
use crate::noise::{NoisePath, NoiseSpace};
use crate::scalar::{c, cu, Scalar};
use crate::solver::{llf_divergence_linearized, solve_trajectory, SolverConfig, Trajectory};
use crate::stats::{mean_ci95, MeanCi};
use crate::weights::{lp_norm_sampled, Mollifier, Weight};
use crate::{Error, Result};

/// Tangent trajectory for one `(r, z_k)` cell, stored from its birth step.
///
/// The slice stored at the birth step itself is the initial profile
/// `sigma(., u(r), z_k)`; every time statistic pairs it with a kernel that
/// vanishes there, matching the convention that the derivative of `u(r)`
/// with respect to its own increment row is zero.
#[derive(Debug, Clone)]
pub struct TangentField<S: Scalar> {
    r_index: usize,
    k: usize,
    grid: Grid1d<S>,
    dt: S,
    /// Slices for steps `r_index..=n_end`, flat; empty when unborn.
    data: Vec<S>,
    n_end: usize,
    zeros: Vec<S>,
}

impl<S: Scalar> TangentField<S> {
    #[inline]
    pub fn r_index(&self) -> usize {
        self.r_index
    }

    #[inline]
    pub fn node(&self) -> usize {
        self.k
    }

    /// Whether the birth step lies strictly inside the solved horizon.
    pub fn born(&self) -> bool {
        !self.data.is_empty()
    }

    #[inline]
    pub fn n_end(&self) -> usize {
        self.n_end
    }

    /// Field at step `n`; identically zero before birth.
    pub fn at_step(&self, n: usize) -> &[S] {
        let w = self.grid.n_x();
        if !self.born() || n < self.r_index || n > self.n_end {
            &self.zeros
        } else {
            let i = n - self.r_index;
            &self.data[i * w..(i + 1) * w]
        }
    }

    pub fn final_field(&self) -> GridField<S> {
        let mut f = GridField::from_values(self.grid, self.at_step(self.n_end).to_vec()).unwrap();
        f.t = self.dt * cu::<S>(self.n_end);
        f
    }
}

/// Propagate an arbitrary initial profile through the linearised scheme
/// from step `r_index` to `n_end`. The tangent equation is linear, so this
/// is the general propagator; [`solve_tangent`] feeds it the canonical
/// initial profile.
pub fn solve_tangent_from_profile<S: Scalar>(
    cfg: &SolverConfig<S>,
    base: &Trajectory<S>,
    path: &NoisePath<S>,
    r_index: usize,
    k: usize,
    profile: &[S],
    n_end: usize,
) -> Result<TangentField<S>> {
    let grid = cfg.grid;
    let n_x = grid.n_x();
    if base.n_slices() < n_end + 1 {
        return Err(Error::Config("base trajectory shorter than tangent horizon".into()));
    }
    let mk = |data: Vec<S>| TangentField {
        r_index,
        k,
        grid,
        dt: cfg.dt,
        data,
        n_end,
        zeros: vec![S::zero(); n_x],
    };
    if r_index >= n_end {
        // born at or after the horizon: zero field (adaptedness)
        return Ok(mk(vec![]));
    }
    let mut plan = HeatPlan::new(grid);
    let mod_profile: Vec<S> = (0..n_x).map(|j| cfg.sigma.x_factor(grid.x(j))).collect();
    let mut data = Vec::with_capacity((n_end - r_index + 1) * n_x);
    data.extend_from_slice(profile);
    let mut w = profile.to_vec();
    let mut drift = vec![S::zero(); n_x];
    // first step is the bare propagator applied to the initial profile
    plan.convolve_in_place(&mut w, cfg.eps * cfg.dt);
    data.extend_from_slice(&w);
    let cap = c::<S>(1e10);
    for n in (r_index + 1)..n_end {
        let u_n = base.slice(n);
        llf_divergence_linearized(&cfg.flux, u_n, &w, grid.dx(), &mut drift);
        let chi = {
            let terms: Vec<S> = cfg
                .sigma
                .node_amplitudes()
                .iter()
                .zip(path.row(n))
                .map(|(&g, &dw)| g * dw)
                .collect();
            crate::stats::pairwise_sum(&terms)
        };
        for j in 0..n_x {
            let v = w[j] - cfg.dt * drift[j]
                + cfg.sigma.du_factor(u_n[j]) * mod_profile[j] * chi * w[j];
            if !v.is_finite() || v.abs() > cap {
                return Err(Error::SolverAbort { step: n, reason: "tangent blew up".into() });
            }
            w[j] = v;
        }
        plan.convolve_in_place(&mut w, cfg.eps * cfg.dt);
        data.extend_from_slice(&w);
    }
    Ok(mk(data))
}

/// Canonical initial profile `sigma(x, u(r, x), z_k)` on the grid.
pub fn tangent_initial_profile<S: Scalar>(
    cfg: &SolverConfig<S>,
    base: &Trajectory<S>,
    r_index: usize,
    k: usize,
) -> Vec<S> {
    let grid = cfg.grid;
    let u_r = base.slice(r_index);
    (0..grid.n_x())
        .map(|j| cfg.sigma.eval(grid.x(j), u_r[j], k))
        .collect()
}

/// Solve the tangent equation for the cell `(r_index, z_k)` up to `n_end`.
pub fn solve_tangent_window<S: Scalar>(
    cfg: &SolverConfig<S>,
    base: &Trajectory<S>,
    path: &NoisePath<S>,
    r_index: usize,
    k: usize,
    n_end: usize,
) -> Result<TangentField<S>> {
    if r_index >= n_end {
        return solve_tangent_from_profile(cfg, base, path, r_index, k, &[], n_end);
    }
    let profile = tangent_initial_profile(cfg, base, r_index, k);
    solve_tangent_from_profile(cfg, base, path, r_index, k, &profile, n_end)
}

/// Tangent solve over the full configured horizon.
pub fn solve_tangent<S: Scalar>(
    cfg: &SolverConfig<S>,
    base: &Trajectory<S>,
    path: &NoisePath<S>,
    r_index: usize,
    k: usize,
) -> Result<TangentField<S>> {
    solve_tangent_window(cfg, base, path, r_index, k, cfg.n_steps)
}

/// Default Cameron-Martin shift size: square root of machine epsilon times
/// the scale of the increments in the shifted cell.
pub fn default_fd_step<S: Scalar>(cfg: &SolverConfig<S>, k: usize) -> S {
    c::<S>(f64::EPSILON.sqrt()) * (cfg.dt * cfg.space.mu()[k]).sqrt()
}

/// Finite-difference oracle for `D_{r,z_k} u(T)`: solve on the path with
/// `dW[r][k]` shifted by `eps_fd` and return the difference quotient at the
/// final time.
pub fn fd_malliavin_oracle<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    path: &NoisePath<S>,
    r_index: usize,
    k: usize,
    eps_fd: S,
    two_sided: bool,
) -> Result<GridField<S>> {
    let up = {
        let shifted = path.shifted(r_index, k, eps_fd)?;
        crate::solver::solve_with_observer(cfg, u0, &shifted, |_, _, _| {})?
    };
    let lo = if two_sided {
        let shifted = path.shifted(r_index, k, -eps_fd)?;
        crate::solver::solve_with_observer(cfg, u0, &shifted, |_, _, _| {})?
    } else {
        crate::solver::solve_with_observer(cfg, u0, path, |_, _, _| {})?
    };
    let denom = if two_sided { eps_fd + eps_fd } else { eps_fd };
    let mut out = up.sub(&lo).scaled(S::one() / denom);
    out.t = cfg.horizon();
    Ok(out)
}

/// Monte Carlo estimate of the weak attainment of the tangent initial
/// condition, per mollifier radius:
///
/// ```text
/// T_{r0} = E int_Z int int (D_{r,z} u(t,x) - sigma(x, u(r,x), z))
///          J+_{r0}(t - r) Psi(x) phi(x) dt dx dmu(z).
/// ```
#[derive(Debug, Clone)]
pub struct WeakContinuityReport<S: Scalar> {
    /// `(r0, estimate)` per requested radius, largest first if so passed.
    pub per_r0: Vec<(S, MeanCi<S>)>,
    /// Measured constant of the uniform bound:
    /// `sup_t E[|D_r u(t)|^2]^{1/2} + |M|_{L2(Z)} E[|1 + |u(r)||_{2,phi}^2]^{1/2}`.
    pub bound_c: S,
    /// `|Psi|_{L2(Z; L2(phi))}`.
    pub psi_norm: S,
}

impl<S: Scalar> WeakContinuityReport<S> {
    /// `|T_{r0}| <= C |Psi|` for every radius.
    pub fn uniform_bound_holds(&self) -> bool {
        self.per_r0
            .iter()
            .all(|(_, ci)| ci.mean.abs() <= self.bound_c * self.psi_norm)
    }
}

/// See [`WeakContinuityReport`]. The weight must be compactly supported
/// (a truncated weight); `Psi` is a deterministic test field shared by all
/// noise nodes; radii below `dt` are rejected. The discrete time kernels are
/// normalised to unit mass so estimates are comparable across radii.
#[allow(clippy::too_many_arguments)]
pub fn weak_time_continuity_stat<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    n_mc: usize,
    r_index: usize,
    r0_list: &[S],
    psi: &GridField<S>,
    weight: &Weight<S>,
    seed: u64,
) -> Result<WeakContinuityReport<S>> {
    if weight.in_weight_class() {
        return Err(Error::InvalidInput(
            "weak-continuity statistic needs a compactly supported (truncated) weight".into(),
        ));
    }
    for &r0 in r0_list {
        if r0 < cfg.dt {
            return Err(Error::InvalidInput(format!(
                "mollifier radius {r0} below the time step"
            )));
        }
    }
    let r0_max = r0_list.iter().fold(S::zero(), |m, &v| m.max(v));
    let window = (r0_max / cfg.dt).to_f64().unwrap().ceil() as usize * 2;
    let n_end = r_index + window;
    if n_end > cfg.n_steps {
        return Err(Error::Config("tangent window extends past the horizon".into()));
    }
    let mut short_cfg = cfg.clone();
    short_cfg.n_steps = n_end;
    let grid = cfg.grid;
    let dx = grid.dx();
    let phi = weight.sample(grid);
    let m = cfg.space.m();
    // discrete-mass-normalised time kernels per r0
    let kernels: Vec<Vec<S>> = r0_list
        .iter()
        .map(|&r0| {
            let jr = Mollifier::new_shifted(r0).unwrap();
            let raw: Vec<S> = (0..=window).map(|i| jr.eval(cfg.dt * cu::<S>(i))).collect();
            let mass = crate::stats::pairwise_sum(&raw);
            raw.iter().map(|&v| v / mass).collect()
        })
        .collect();

    struct PerSample<S> {
        stats: Vec<S>,
        sup_d: S,
        base_r: S,
    }
    let samples: Vec<PerSample<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, n_end, seed, i as u64)?;
        let base = solve_trajectory(&short_cfg, u0, &path)?;
        let tangents: Vec<TangentField<S>> = (0..m)
            .map(|k| solve_tangent_window(&short_cfg, &base, &path, r_index, k, n_end))
            .collect::<Result<_>>()?;
        let profiles: Vec<Vec<S>> = (0..m)
            .map(|k| tangent_initial_profile(&short_cfg, &base, r_index, k))
            .collect();
        let mut stats = vec![S::zero(); r0_list.len()];
        let mut sup_d = S::zero();
        for offset in 0..=window {
            let n = r_index + offset;
            let mut d_norm_sq = S::zero();
            for k in 0..m {
                let w_slice = tangents[k].at_step(n);
                let mut pair = S::zero();
                let mut nrm = S::zero();
                for j in 0..grid.n_x() {
                    let diff = w_slice[j] - profiles[k][j];
                    pair += diff * psi.values()[j] * phi[j];
                    nrm += w_slice[j] * w_slice[j] * phi[j];
                }
                let mu_k = cfg.space.mu()[k];
                for (ri, kern) in kernels.iter().enumerate() {
                    stats[ri] += kern[offset] * pair * dx * mu_k;
                }
                d_norm_sq += nrm * dx * mu_k;
            }
            sup_d = sup_d.max(d_norm_sq);
        }
        let ur = base.slice(r_index);
        let one_plus: Vec<S> = ur.iter().map(|&v| S::one() + v.abs()).collect();
        let base_r = lp_norm_sampled(&one_plus, c::<S>(2.0), &phi, dx);
        Ok(PerSample { stats, sup_d, base_r: base_r * base_r })
    })?;

    let per_r0 = r0_list
        .iter()
        .enumerate()
        .map(|(ri, &r0)| {
            let vals: Vec<S> = samples.iter().map(|s| s.stats[ri]).collect();
            (r0, mean_ci95(&vals))
        })
        .collect();
    let mean_of = |f: &dyn Fn(&PerSample<S>) -> S| {
        let vals: Vec<S> = samples.iter().map(f).collect();
        crate::stats::pairwise_sum(&vals) / cu::<S>(n_mc)
    };
    let bound_c = mean_of(&|s| s.sup_d).sqrt()
        + cfg.sigma.m_l2() * mean_of(&|s| s.base_r).sqrt();
    let psi_norm = lp_norm_sampled(psi.values(), c::<S>(2.0), &phi, dx);
    Ok(WeakContinuityReport { per_r0, bound_c, psi_norm })
}

/// A cell function `h(t_n, z_k)` over the increment lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField<S: Scalar> {
    n_steps: usize,
    m: usize,
    data: Vec<S>,
}

impl<S: Scalar> CellField<S> {
    pub fn from_fn(n_steps: usize, m: usize, dt: S, f: impl Fn(S, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(n_steps * m);
        for n in 0..n_steps {
            let t = dt * cu::<S>(n);
            for k in 0..m {
                data.push(f(t, k));
            }
        }
        Self { n_steps, m, data }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> S {
        self.data[n * self.m + k]
    }

    pub fn scale(&mut self, a: S) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    /// `W(h) = sum h[n][k] dW[n][k]` (the discrete isonormal pairing).
    pub fn wiener_pairing(&self, path: &NoisePath<S>) -> S {
        debug_assert!(path.n_steps() >= self.n_steps && path.m() == self.m);
        let terms: Vec<S> = (0..self.n_steps)
            .flat_map(|n| (0..self.m).map(move |k| (n, k)))
            .map(|(n, k)| self.get(n, k) * path.get(n, k))
            .collect();
        crate::stats::pairwise_sum(&terms)
    }

    /// `<h, g>_H = sum h g dt mu_k`.
    pub fn h_inner(&self, other: &CellField<S>, dt: S, space: &NoiseSpace<S>) -> S {
        debug_assert_eq!(self.data.len(), other.data.len());
        let terms: Vec<S> = (0..self.n_steps)
            .flat_map(|n| (0..self.m).map(move |k| (n, k)))
            .map(|(n, k)| self.get(n, k) * other.get(n, k) * dt * space.mu()[k])
            .collect();
        crate::stats::pairwise_sum(&terms)
    }

    pub fn h_norm(&self, dt: S, space: &NoiseSpace<S>) -> S {
        self.h_inner(self, dt, space).sqrt()
    }
}

/// Smooth outer functions with bounded derivatives and analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum OuterFn<S: Scalar> {
    /// `f(w) = c0 + sum c_i w_i`.
    Linear { offset: S, coefs: Vec<S> },
    /// `f(w) = scale tanh(w_1)`.
    Tanh { scale: S },
    /// `f(w) = scale exp(-w_1^2 / 2)`.
    Gaussian { scale: S },
}

impl<S: Scalar> OuterFn<S> {
    pub fn arity(&self) -> usize {
        match self {
            OuterFn::Linear { coefs, .. } => coefs.len(),
            _ => 1,
        }
    }

    pub fn eval(&self, w: &[S]) -> S {
        match self {
            OuterFn::Linear { offset, coefs } => {
                let mut acc = *offset;
                for (c_i, w_i) in coefs.iter().zip(w) {
                    acc += *c_i * *w_i;
                }
                acc
            }
            OuterFn::Tanh { scale } => *scale * w[0].tanh(),
            OuterFn::Gaussian { scale } => *scale * (-w[0] * w[0] / c::<S>(2.0)).exp(),
        }
    }

    pub fn grad(&self, w: &[S]) -> Vec<S> {
        match self {
            OuterFn::Linear { coefs, .. } => coefs.clone(),
            OuterFn::Tanh { scale } => {
                let t = w[0].tanh();
                vec![*scale * (S::one() - t * t)]
            }
            OuterFn::Gaussian { scale } => {
                vec![-*scale * w[0] * (-w[0] * w[0] / c::<S>(2.0)).exp()]
            }
        }
    }
}

/// Smooth random variable `V = f(W(h_1), ..., W(h_n))` with the analytic
/// derivative `D_{t,z} V = sum_i d_i f(W(h)) h_i(t,z)`.
#[derive(Debug, Clone)]
pub struct SmoothRv<S: Scalar> {
    pub outer: OuterFn<S>,
    pub directions: Vec<CellField<S>>,
}

impl<S: Scalar> SmoothRv<S> {
    pub fn new(outer: OuterFn<S>, directions: Vec<CellField<S>>) -> Result<Self> {
        if outer.arity() != directions.len() {
            return Err(Error::InvalidInput(format!(
                "outer function of {} variables got {} directions",
                outer.arity(),
                directions.len()
            )));
        }
        Ok(Self { outer, directions })
    }

    /// Deterministic constant (zero Malliavin derivative).
    pub fn constant(v: S) -> Self {
        Self { outer: OuterFn::Linear { offset: v, coefs: vec![] }, directions: vec![] }
    }

    pub fn is_constant(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn pairings(&self, path: &NoisePath<S>) -> Vec<S> {
        self.directions.iter().map(|h| h.wiener_pairing(path)).collect()
    }

    pub fn value(&self, path: &NoisePath<S>) -> S {
        self.outer.eval(&self.pairings(path))
    }

    /// `(value, derivative cell field)` for one path; `None` derivative for
    /// constants.
    pub fn eval_with_derivative(&self, path: &NoisePath<S>) -> (S, Option<CellField<S>>) {
        let w = self.pairings(path);
        let value = self.outer.eval(&w);
        if self.directions.is_empty() {
            return (value, None);
        }
        let grad = self.outer.grad(&w);
        let mut d = self.directions[0].clone();
        d.scale(grad[0]);
        for (gi, hi) in grad.iter().zip(&self.directions).skip(1) {
            for (slot, &hv) in d.data.iter_mut().zip(&hi.data) {
                *slot += *gi * hv;
            }
        }
        (value, Some(d))
    }
}
