//! Two-solution diagnostics: doubling-of-variables terms, the Kato
//! inequality, L^1 contraction, fractional-BV moduli, and the
//! vanishing-viscosity Cauchy study.
//!
//! Every comparison couples its two solutions through one shared noise path
//! (the reports carry the path hash). The reference "entropy solution" in
//! the doubling and Kato checks is a second viscous solve at a quarter of
//! the probe viscosity; its residual viscosity is budgeted in the
//! tolerances. All inequality checks use pre-registered budgets from
//! [`crate::tolerances`] - nothing is tightened or loosened at run time.

use crate::bump::Plateau1d;
use crate::entropy::EntropyPair;
use crate::grid::GridField;
use crate::malliavin::{solve_tangent_window, TangentField};
use crate::mc;
use crate::noise::NoisePath;
use crate::scalar::{c, cu, Scalar};
use crate::solver::{solve_trajectory, PathSolver, SolverConfig, Trajectory};
use crate::stats::{fit_line, fit_two_regressors, mean_ci95, LineFit, MeanCi};
use crate::tolerances;
use crate::weights::{lp_norm_sampled, Mollifier};
use crate::{Error, Result};

/// Reference viscosity used for the "entropy solution" stand-in.
pub fn reference_viscosity<S: Scalar>(eps: S) -> S {
    eps / c::<S>(4.0)
}

fn coupled_cfg<S: Scalar>(cfg: &SolverConfig<S>, eps: S) -> SolverConfig<S> {
    let mut v_cfg = cfg.clone();
    v_cfg.eps = eps;
    v_cfg
}

// ---------------------------------------------------------------------------
// doubling of variables

/// Radii and cutoffs of the doubling test function
/// `(1/2) psi((x+y)/2) J_r((x-y)/2) xi_{gamma,t0}(t) J+_{r0}(t-s)`.
#[derive(Debug, Clone, Copy)]
pub struct DoublingParams<S: Scalar> {
    /// Spatial mollifier radius (>= 2 dx).
    pub r: S,
    /// Time mollifier radius (>= dt).
    pub r0: S,
    /// Entropy smoothing.
    pub delta: S,
    /// Time cutoff radius.
    pub gamma: S,
    /// Evaluation time.
    pub t0: S,
    /// Spatial test field `psi`.
    pub psi: Plateau1d<S>,
    /// Stride of the outer time quadrature of the F/T1/T3 terms.
    pub stride_t: usize,
    /// Stride of the tangent birth times in the T2 term.
    pub stride_s: usize,
    /// Sub-sampling of the `s`-window in the F/T1/T3 terms.
    pub stride_tau: usize,
}

impl<S: Scalar> DoublingParams<S> {
    pub fn validate(&self, cfg: &SolverConfig<S>) -> Result<()> {
        let t_end = cfg.horizon();
        if !(self.r0 + self.r0 < self.t0) {
            return Err(Error::InvalidInput("need 2 r0 < t0".into()));
        }
        if !(self.gamma < (t_end - self.t0) / c::<S>(2.0)) {
            return Err(Error::InvalidInput("need gamma < (T - t0)/2".into()));
        }
        if self.r < cfg.grid.dx() + cfg.grid.dx() {
            return Err(Error::InvalidInput("spatial radius under-resolved".into()));
        }
        if self.r0 < cfg.dt || self.gamma < cfg.dt {
            return Err(Error::InvalidInput("time radii under-resolved".into()));
        }
        Ok(())
    }

    /// Smoothing coupled to the spatial radius, `delta = r^{1+eta}` with
    /// `0 < eta < 2 kappa`, as the Hoelder-coupled limits require.
    pub fn coupled_delta(r: S, eta: S) -> S {
        r.powf(S::one() + eta)
    }
}

/// Monte Carlo estimates of the six doubling terms and the per-path slack
/// `L - (R + F + T1 + T2 + T3)`.
#[derive(Debug, Clone)]
pub struct DoublingReport<S: Scalar> {
    pub l: MeanCi<S>,
    pub r: MeanCi<S>,
    pub f: MeanCi<S>,
    pub t1: MeanCi<S>,
    pub t2: MeanCi<S>,
    pub t3: MeanCi<S>,
    pub slack: MeanCi<S>,
    pub tol: S,
    pub path_hash: String,
}

impl<S: Scalar> DoublingReport<S> {
    /// `L >= R + F + T1 + T2 + T3 - tol`.
    pub fn inequality_holds(&self) -> bool {
        self.slack.mean >= -self.tol
    }
}

struct PathTerms<S> {
    l: S,
    r: S,
    f: S,
    t1: S,
    t2: S,
    t3: S,
}

/// One-path evaluation of all doubling terms.
#[allow(clippy::too_many_arguments)]
fn doubling_terms_for_path<S: Scalar>(
    cfg_u: &SolverConfig<S>,
    cfg_v: &SolverConfig<S>,
    u: &Trajectory<S>,
    v: &Trajectory<S>,
    path: &NoisePath<S>,
    par: &DoublingParams<S>,
    pair: &EntropyPair<S>,
) -> Result<PathTerms<S>> {
    let grid = cfg_u.grid;
    let n_x = grid.n_x();
    let dx = grid.dx();
    let dt = cfg_u.dt;
    let half = c::<S>(0.5);

    let jr = Mollifier::new(par.r)?;
    // spatial band: |x - y| < 2r
    let band = ((par.r + par.r) / dx).to_f64().unwrap().ceil() as isize;
    // midpoint profiles on the half-grid: psi((x+y)/2) needs x+y = even
    // multiples of dx/2; precompute psi and psi' on a twice-finer grid.
    let psi_fine: Vec<S> = (0..2 * n_x).map(|j| par.psi.value(grid.x(0) + cu::<S>(j) * dx / c::<S>(2.0))).collect();
    let dpsi_fine: Vec<S> = (0..2 * n_x).map(|j| par.psi.deriv(grid.x(0) + cu::<S>(j) * dx / c::<S>(2.0))).collect();
    let ddpsi_fine: Vec<S> = (0..2 * n_x)
        .map(|j| par.psi.second_deriv(grid.x(0) + cu::<S>(j) * dx / c::<S>(2.0)))
        .collect();
    // J_r((x-y)/2) and derivatives at offsets o = (i_x - i_y)
    let off_lo = -band;
    let off_hi = band;
    let jvals: Vec<S> = (off_lo..=off_hi).map(|o| jr.eval(cu_signed::<S>(o) * dx / c::<S>(2.0))).collect();
    let jder: Vec<S> = (off_lo..=off_hi).map(|o| jr.deriv(cu_signed::<S>(o) * dx / c::<S>(2.0))).collect();
    let jsec: Vec<S> =
        (off_lo..=off_hi).map(|o| jr.second_deriv(cu_signed::<S>(o) * dx / c::<S>(2.0))).collect();

    // time kernels
    let w0 = (par.r0 / dt).to_f64().unwrap().ceil() as usize * 2; // s-window length
    let jplus = Mollifier::new_shifted(par.r0)?;
    let tau_kernel: Vec<S> = {
        let raw: Vec<S> = (0..=w0).map(|i| jplus.eval(dt * cu::<S>(i))).collect();
        let mass = crate::stats::pairwise_sum(&raw);
        raw.iter().map(|&v| v / mass).collect()
    };
    let t0_step = (par.t0 / dt).to_f64().unwrap().round() as usize;
    let wg = (par.gamma / dt).to_f64().unwrap().ceil() as usize * 2; // gamma window
    let jgamma = Mollifier::new_shifted(par.gamma)?;
    let gamma_kernel: Vec<S> = {
        let raw: Vec<S> = (0..=wg).map(|i| jgamma.eval(dt * cu::<S>(i))).collect();
        let mass = crate::stats::pairwise_sum(&raw);
        raw.iter().map(|&v| v / mass).collect()
    };
    // xi_{gamma,t0}(t): 1 up to t0, then 1 - cumulative gamma kernel
    let n_support = t0_step + wg; // last step with xi > 0
    let xi = |n: usize| -> S {
        if n <= t0_step {
            S::one()
        } else if n >= n_support {
            S::zero()
        } else {
            let mut acc = S::zero();
            for (i, k) in gamma_kernel.iter().enumerate() {
                if t0_step + i < n {
                    acc += *k;
                }
            }
            S::one() - acc
        }
    };
    let xi_cache: Vec<S> = (0..=n_support).map(xi).collect();

    // separable sigma pieces
    let g2: S = {
        let terms: Vec<S> = cfg_u
            .sigma
            .node_amplitudes()
            .iter()
            .zip(cfg_u.space.mu())
            .map(|(&g, &mu)| mu * g * g)
            .collect();
        crate::stats::pairwise_sum(&terms)
    };
    let mod_profile: Vec<S> = (0..n_x).map(|j| cfg_u.sigma.x_factor(grid.x(j))).collect();

    // band sweep helper: sums integrand(u_t[x], v_s[y], x, y-offset) over the band
    // with the (1/2) psi J_r weight; `which` selects the spatial kernel.
    let band_sum = |u_t: &[S], v_s: &[S], f: &mut dyn FnMut(usize, isize, S, S, S, S, S)| {
        for jx in 0..n_x {
            for o in off_lo..=off_hi {
                let jy = (jx as isize - o).rem_euclid(n_x as isize) as usize;
                // (x + y)/2 on the fine grid: index jx + jy (wrapped on 2 n_x)
                let mid = (jx + jy) % (2 * n_x);
                let oi = (o - off_lo) as usize;
                f(jx, o, u_t[jx], v_s[jy], psi_fine[mid], jvals[oi], dpsi_fine[mid]);
                let _ = oi;
            }
        }
    };
    let _ = band_sum; // replaced by explicit loops below

    let mut l_term = S::zero();
    // L: s = 0 slice of v (its initial data), t in (0, 2 r0)
    for (off, kern) in tau_kernel.iter().enumerate() {
        if *kern == S::zero() {
            continue;
        }
        let u_t = u.slice(off);
        let v0 = v.slice(0);
        let mut acc = S::zero();
        for jx in 0..n_x {
            for o in off_lo..=off_hi {
                let oi = (o - off_lo) as usize;
                if jvals[oi] == S::zero() {
                    continue;
                }
                let jy = (jx as isize - o).rem_euclid(n_x as isize) as usize;
                let mid = (jx + jy) % (2 * n_x);
                acc += pair.s(v0[jy] - u_t[jx]) * psi_fine[mid] * jvals[oi];
            }
        }
        l_term += *kern * acc * half * dx * dx;
    }

    // R: t in (t0, t0 + 2 gamma), s in the tau window behind t
    let mut r_term = S::zero();
    for (gi, gk) in gamma_kernel.iter().enumerate() {
        if *gk == S::zero() {
            continue;
        }
        let n_t = t0_step + gi;
        let u_t = u.slice(n_t);
        for (ti, tk) in tau_kernel.iter().enumerate() {
            if *tk == S::zero() || ti > n_t {
                continue;
            }
            let v_s = v.slice(n_t - ti);
            let mut acc = S::zero();
            for jx in 0..n_x {
                for o in off_lo..=off_hi {
                    let oi = (o - off_lo) as usize;
                    if jvals[oi] == S::zero() {
                        continue;
                    }
                    let jy = (jx as isize - o).rem_euclid(n_x as isize) as usize;
                    let mid = (jx + jy) % (2 * n_x);
                    acc += pair.s(v_s[jy] - u_t[jx]) * psi_fine[mid] * jvals[oi];
                }
            }
            r_term += *gk * *tk * acc * half * dx * dx;
        }
    }

    // F, T1, T3 share the strided (t, s) sweep over the xi support.
    let mut f_term = S::zero();
    let mut t1_term = S::zero();
    let mut t3_term = S::zero();
    let tau_samples: Vec<usize> = (0..=w0).step_by(par.stride_tau.max(1)).collect();
    let tau_mass: S = {
        let vals: Vec<S> = tau_samples.iter().map(|&i| tau_kernel[i]).collect();
        crate::stats::pairwise_sum(&vals)
    };
    let mut n_t = 0usize;
    while n_t <= n_support {
        let span = par.stride_t.min(n_support - n_t + 1).max(1);
        let w_t = dt * cu::<S>(span);
        let xi_t = xi_cache[n_t];
        if xi_t > S::zero() {
            let u_t = u.slice(n_t);
            for &ti in &tau_samples {
                if ti > n_t {
                    continue;
                }
                let tk = tau_kernel[ti] / tau_mass;
                if tk == S::zero() {
                    continue;
                }
                let v_s = v.slice(n_t - ti);
                let mut acc_f = S::zero();
                let mut acc_t1 = S::zero();
                let mut acc_t3 = S::zero();
                for jx in 0..n_x {
                    let uu = u_t[jx];
                    let f_u = cfg_u.flux.value(uu);
                    let su = cfg_u.sigma.u_factor(uu) * mod_profile[jx];
                    for o in off_lo..=off_hi {
                        let oi = (o - off_lo) as usize;
                        let jy = (jx as isize - o).rem_euclid(n_x as isize) as usize;
                        let mid = (jx + jy) % (2 * n_x);
                        let vv = v_s[jy];
                        let w = vv - uu;
                        // F: Q(u,v) d_x test + Q(v,u) d_y test with
                        // d_x test = (1/4)(psi' J + psi J'), d_y = (1/4)(psi' J - psi J')
                        let q_uv = crate::entropy::q_flux(pair, &cfg_u.flux, uu, vv);
                        let q_vu = crate::entropy::q_flux(pair, &cfg_u.flux, vv, uu);
                        let dpsi_j = dpsi_fine[mid] * jvals[oi];
                        let psi_dj = psi_fine[mid] * jder[oi];
                        acc_f += (q_uv + q_vu) * dpsi_j + (q_uv - q_vu) * psi_dj;
                        // T1 and T3 need S'' and S on the same stencil
                        let s2 = pair.s_second(w);
                        if s2 != S::zero() {
                            let sv = cfg_u.sigma.u_factor(vv) * cfg_u.sigma.x_factor(grid.x(jy));
                            let dsig = sv - su;
                            acc_t1 += s2 * g2 * dsig * dsig * psi_fine[mid] * jvals[oi];
                        }
                        // T3: Delta_x test = (1/8)(psi'' J + 2 psi' J' + psi J'')
                        let lap = ddpsi_fine[mid] * jvals[oi]
                            + c::<S>(2.0) * dpsi_fine[mid] * jder[oi]
                            + psi_fine[mid] * jsec[oi];
                        acc_t3 += pair.s(uu - vv) * lap;
                    }
                }
                let scale = w_t * tk * xi_t * dx * dx;
                f_term += -(acc_f * c::<S>(0.25)) * scale;
                t1_term += -(acc_t1 * half * half) * scale;
                t3_term += -(cfg_u.eps * acc_t3 * c::<S>(0.125)) * scale;
            }
        }
        n_t += span;
    }

    // T2: tangent fields born at strided s, evaluated over the tau window.
    let mut t2_term = S::zero();
    let mut s_idx = 0usize;
    while s_idx <= n_support {
        let span = par.stride_s.min(n_support - s_idx + 1).max(1);
        let w_s = dt * cu::<S>(span);
        let n_end = (s_idx + w0).min(cfg_u.n_steps);
        let tangents: Vec<TangentField<S>> = (0..cfg_u.space.m())
            .map(|k| solve_tangent_window(cfg_u, u, path, s_idx, k, n_end))
            .collect::<Result<_>>()?;
        let v_s = v.slice(s_idx);
        for ti in 1..=w0 {
            let n_t = s_idx + ti;
            if n_t > cfg_u.n_steps || n_t > n_support {
                break;
            }
            let tk = tau_kernel[ti];
            let xi_t = xi_cache[n_t];
            if tk == S::zero() || xi_t == S::zero() {
                continue;
            }
            let u_t = u.slice(n_t);
            // A(t,x) = sum_k mu_k g_k D_k(t,x)
            let mut a_field = vec![S::zero(); n_x];
            for (k, tf) in tangents.iter().enumerate() {
                let mu_g = cfg_u.space.mu()[k] * cfg_u.sigma.node_amplitudes()[k];
                let d = tf.at_step(n_t);
                for j in 0..n_x {
                    a_field[j] += mu_g * d[j];
                }
            }
            let mut acc = S::zero();
            for jx in 0..n_x {
                let uu = u_t[jx];
                let su = cfg_u.sigma.u_factor(uu) * mod_profile[jx];
                // sum_k mu_k (D_k - g_k s(u) m(x)) g_k = A - g2 s(u) m(x)
                let coeff = a_field[jx] - g2 * su;
                if coeff == S::zero() {
                    continue;
                }
                for o in off_lo..=off_hi {
                    let oi = (o - off_lo) as usize;
                    if jvals[oi] == S::zero() {
                        continue;
                    }
                    let jy = (jx as isize - o).rem_euclid(n_x as isize) as usize;
                    let vv = v_s[jy];
                    let s2 = pair.s_second(vv - uu);
                    if s2 == S::zero() {
                        continue;
                    }
                    let mid = (jx + jy) % (2 * n_x);
                    let sv = cfg_u.sigma.u_factor(vv) * cfg_u.sigma.x_factor(grid.x(jy));
                    acc += s2 * coeff * sv * psi_fine[mid] * jvals[oi];
                }
            }
            t2_term += acc * tk * xi_t * w_s * half * dx * dx;
        }
        s_idx += span;
    }
    let _ = cfg_v;

    Ok(PathTerms { l: l_term, r: r_term, f: f_term, t1: t1_term, t2: t2_term, t3: t3_term })
}

fn cu_signed<S: Scalar>(o: isize) -> S {
    if o >= 0 {
        cu::<S>(o as usize)
    } else {
        -cu::<S>((-o) as usize)
    }
}

/// Monte Carlo doubling-of-variables check: `v` is a coupled second viscous
/// solve at a quarter viscosity standing in for the entropy solution.
pub fn doubling_terms<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    v0: &GridField<S>,
    par: &DoublingParams<S>,
    pair: &EntropyPair<S>,
    n_mc: usize,
    seed: u64,
) -> Result<DoublingReport<S>> {
    par.validate(cfg)?;
    let cfg_v = coupled_cfg(cfg, reference_viscosity(cfg.eps));
    let first_path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, 0)?;
    let path_hash = first_path.content_hash();
    let results: Vec<PathTerms<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let u = solve_trajectory(cfg, u0, &path)?;
        let v = solve_trajectory(&cfg_v, v0, &path)?;
        doubling_terms_for_path(cfg, &cfg_v, &u, &v, &path, par, pair)
    })?;
    let collect = |f: &dyn Fn(&PathTerms<S>) -> S| {
        let vals: Vec<S> = results.iter().map(f).collect();
        mean_ci95(&vals)
    };
    let slack = collect(&|p| p.l - (p.r + p.f + p.t1 + p.t2 + p.t3));
    let tol = c::<S>(tolerances::doubling::C1_DX) * cfg.grid.dx()
        + c::<S>(tolerances::doubling::C2_DT) * cfg.dt
        + c::<S>(3.0) * slack.se
        + c::<S>(tolerances::doubling::C3_EPS) * (cfg.eps + cfg_v.eps);
    Ok(DoublingReport {
        l: collect(&|p| p.l),
        r: collect(&|p| p.r),
        f: collect(&|p| p.f),
        t1: collect(&|p| p.t1),
        t2: collect(&|p| p.t2),
        t3: collect(&|p| p.t3),
        slack,
        tol,
        path_hash,
    })
}

// ---------------------------------------------------------------------------
// Kato inequality and L1 contraction

/// Both sides of the Kato inequality at `t0`.
#[derive(Debug, Clone)]
pub struct KatoReport<S: Scalar> {
    /// `E int |u(t0) - v(t0)| psi dx`.
    pub lhs: MeanCi<S>,
    /// `E int |u0 - v0| psi dx + E int_0^{t0} int sign(u-v)(f(u)-f(v)) psi' dx dt`.
    pub rhs: MeanCi<S>,
    pub tol: S,
    pub path_hash: String,
}

impl<S: Scalar> KatoReport<S> {
    pub fn holds(&self) -> bool {
        self.lhs.mean <= self.rhs.mean + self.tol
    }
}

/// Kato inequality check with coupled noise; `cfg_v` defaults to the
/// quarter-viscosity stand-in when `None`.
#[allow(clippy::too_many_arguments)]
pub fn kato_check<S: Scalar>(
    cfg: &SolverConfig<S>,
    cfg_v: Option<&SolverConfig<S>>,
    u0: &GridField<S>,
    v0: &GridField<S>,
    psi: &Plateau1d<S>,
    t0_step: usize,
    n_mc: usize,
    seed: u64,
) -> Result<KatoReport<S>> {
    if t0_step == 0 || t0_step > cfg.n_steps {
        return Err(Error::InvalidInput("t0 outside the horizon".into()));
    }
    let default_v = coupled_cfg(cfg, reference_viscosity(cfg.eps));
    let cfg_v = cfg_v.unwrap_or(&default_v);
    if cfg_v.grid != cfg.grid || cfg_v.n_steps != cfg.n_steps {
        return Err(Error::Config("coupled configs need shared grid and horizon".into()));
    }
    let grid = cfg.grid;
    let n_x = grid.n_x();
    let dx = grid.dx();
    let psi_vals: Vec<S> = (0..n_x).map(|j| psi.value(grid.x(j))).collect();
    let dpsi_vals: Vec<S> = (0..n_x).map(|j| psi.deriv(grid.x(j))).collect();
    let first_path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, 0)?;
    let path_hash = first_path.content_hash();
    let pairs: Vec<(S, S)> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let mut su = PathSolver::new(cfg.clone())?;
        let mut sv = PathSolver::new(cfg_v.clone())?;
        let mut u = u0.values().to_vec();
        let mut v = v0.values().to_vec();
        let mut flux_int = S::zero();
        let mut lhs = S::zero();
        for n in 0..t0_step {
            // left-point quadrature of the flux term
            let mut row = S::zero();
            for j in 0..n_x {
                if dpsi_vals[j] != S::zero() {
                    let sgn = (u[j] - v[j]).signum();
                    row += sgn * (cfg.flux.value(u[j]) - cfg.flux.value(v[j])) * dpsi_vals[j];
                }
            }
            flux_int += row * cfg.dt * dx;
            su.step_in_place(&mut u, path.row(n), n)?;
            sv.step_in_place(&mut v, path.row(n), n)?;
        }
        for j in 0..n_x {
            lhs += (u[j] - v[j]).abs() * psi_vals[j];
        }
        lhs *= dx;
        let mut init = S::zero();
        for j in 0..n_x {
            init += (u0.values()[j] - v0.values()[j]).abs() * psi_vals[j];
        }
        init *= dx;
        Ok((lhs, init + flux_int))
    })?;
    let lhs = mean_ci95(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let rhs = mean_ci95(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let diff = mean_ci95(&pairs.iter().map(|p| p.0 - p.1).collect::<Vec<_>>());
    let tol = c::<S>(tolerances::kato::C1_DX) * dx
        + c::<S>(tolerances::kato::C2_DT) * cfg.dt
        + c::<S>(3.0) * diff.se
        + c::<S>(tolerances::kato::C3_EPS) * (cfg.eps + cfg_v.eps);
    Ok(KatoReport { lhs, rhs, tol, path_hash })
}

/// `t -> E |u(t) - v(t)|_{1,phi}` under coupled noise, with the
/// non-increase tolerance `tol(t) = c1 dx + c2 sqrt(dt) t + 3 SE`.
#[derive(Debug, Clone)]
pub struct ContractionCurve<S: Scalar> {
    pub points: Vec<(S, MeanCi<S>)>,
    pub path_hash: String,
}

impl<S: Scalar> ContractionCurve<S> {
    /// Nonincreasing within the budget at every snapshot pair.
    pub fn nonincreasing_within(&self, dx: S, dt: S, deterministic: bool) -> bool {
        self.points.windows(2).all(|w| {
            let (t_prev, a) = w[0];
            let (t_next, b) = w[1];
            let _ = t_prev;
            let tol = if deterministic {
                c::<S>(tolerances::contraction::DETERMINISTIC_REL) * (S::one() + a.mean.abs())
            } else {
                c::<S>(tolerances::contraction::C1_DX) * dx
                    + c::<S>(tolerances::contraction::C2_SQRT_DT_T) * dt.sqrt() * t_next
                    + c::<S>(3.0) * (a.se + b.se)
            };
            b.mean <= a.mean + tol
        })
    }
}

/// Coupled-path contraction curve (both solutions use `cfg`, only the data
/// differ).
pub fn l1_contraction_curve<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    v0: &GridField<S>,
    snapshot_steps: &[usize],
    n_mc: usize,
    seed: u64,
) -> Result<ContractionCurve<S>> {
    let grid = cfg.grid;
    let dx = grid.dx();
    let phi = cfg.weight.sample(grid);
    let first_path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, 0)?;
    let path_hash = first_path.content_hash();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let mut su = PathSolver::new(cfg.clone())?;
        let mut sv = PathSolver::new(cfg.clone())?;
        let mut u = u0.values().to_vec();
        let mut v = v0.values().to_vec();
        let mut out = Vec::with_capacity(snapshot_steps.len());
        let mut record = |u: &[S], v: &[S], n: usize| {
            if snapshot_steps.contains(&n) {
                let diff: Vec<S> = u.iter().zip(v).map(|(&a, &b)| a - b).collect();
                out.push(lp_norm_sampled(&diff, S::one(), &phi, dx));
            }
        };
        record(&u, &v, 0);
        for n in 0..cfg.n_steps {
            su.step_in_place(&mut u, path.row(n), n)?;
            sv.step_in_place(&mut v, path.row(n), n)?;
            record(&u, &v, n + 1);
        }
        Ok(out)
    })?;
    let mut points = Vec::with_capacity(snapshot_steps.len());
    let mut sorted: Vec<usize> = snapshot_steps.to_vec();
    sorted.sort_unstable();
    for (si, &step) in sorted.iter().enumerate() {
        let vals: Vec<S> = per_sample.iter().map(|s| s[si]).collect();
        points.push((cfg.dt * cu::<S>(step), mean_ci95(&vals)));
    }
    Ok(ContractionCurve { points, path_hash })
}

// ---------------------------------------------------------------------------
// fractional BV modulus

/// Spatial modulus `eta_r(u) = int int |u(x+z) - u(x-z)| phi(x) J_r(z) dx dz`
/// against the configured weight.
pub fn spatial_modulus<S: Scalar>(
    values: &[S],
    grid: crate::grid::Grid1d<S>,
    phi: &[S],
    r: S,
) -> S {
    let dx = grid.dx();
    let n = grid.n_x();
    let jr = Mollifier::new(r).unwrap();
    let band = (r / dx).to_f64().unwrap().ceil() as isize;
    let mut acc = S::zero();
    for o in -band..=band {
        let jw = jr.eval(cu_signed::<S>(o) * dx);
        if jw == S::zero() {
            continue;
        }
        let mut row = S::zero();
        for j in 0..n {
            let jp = (j as isize + o).rem_euclid(n as isize) as usize;
            let jm = (j as isize - o).rem_euclid(n as isize) as usize;
            row += (values[jp] - values[jm]).abs() * phi[j];
        }
        acc += jw * row;
    }
    acc * dx * dx
}

/// Per-radius fractional-BV report: the modulus of the data, the modulus of
/// the solution at the final time, and the transported bound.
#[derive(Debug, Clone)]
pub struct FracBvReport<S: Scalar> {
    /// `(r, eta_r(0), E eta_r(T))`.
    pub rows: Vec<(S, S, MeanCi<S>)>,
    /// Gronwall transport constant `1 + C t e^{C t}`, `C = C_phi |f|_Lip`.
    pub gronwall_c: S,
    pub kappa: S,
    /// Fitted coefficients of `eta(T) ~ a eta(0) + b r^kappa` and the
    /// standard error of `b`.
    pub excess_fit: (S, S, S),
}

impl<S: Scalar> FracBvReport<S> {
    /// `eta(T) <= C eta(0) + C' r^kappa + 3 SE` per radius with the frozen
    /// envelope constant.
    pub fn bounded(&self) -> bool {
        let cp = c::<S>(tolerances::frac_bv::C_PRIME);
        self.rows.iter().all(|(r, eta0, eta_t)| {
            eta_t.mean
                <= self.gronwall_c * *eta0
                    + cp * r.powf(self.kappa)
                    + c::<S>(3.0) * eta_t.se
        })
    }

    /// For x-independent noise the excess coefficient must vanish within
    /// three standard errors.
    pub fn excess_indistinguishable_from_zero(&self) -> bool {
        let (_, b, b_se) = self.excess_fit;
        b.abs() <= c::<S>(3.0) * b_se
    }
}

pub fn fractional_bv_modulus<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    r_list: &[S],
    n_mc: usize,
    seed: u64,
) -> Result<FracBvReport<S>> {
    for &r in r_list {
        if r < cfg.grid.dx() + cfg.grid.dx() {
            return Err(Error::InvalidInput("modulus radius under-resolved".into()));
        }
    }
    let grid = cfg.grid;
    let phi = cfg.weight.sample(grid);
    let eta0: Vec<S> = r_list
        .iter()
        .map(|&r| spatial_modulus(u0.values(), grid, &phi, r))
        .collect();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let final_u = crate::solver::solve_with_observer(cfg, u0, &path, |_, _, _| {})?;
        Ok(r_list
            .iter()
            .map(|&r| spatial_modulus(final_u.values(), grid, &phi, r))
            .collect())
    })?;
    let rows: Vec<(S, S, MeanCi<S>)> = r_list
        .iter()
        .enumerate()
        .map(|(ri, &r)| {
            let vals: Vec<S> = per_sample.iter().map(|s| s[ri]).collect();
            (r, eta0[ri], mean_ci95(&vals))
        })
        .collect();
    let t_end = cfg.horizon();
    let rate = cfg.weight.c_phi() * cfg.flux.lip();
    let gronwall_c = S::one() + rate * t_end * (rate * t_end).exp();
    let kappa = cfg.sigma.kappa();
    // fit E eta(T) = a eta(0) + b r^kappa
    let x1: Vec<S> = rows.iter().map(|(_, e0, _)| *e0).collect();
    let x2: Vec<S> = rows.iter().map(|(r, _, _)| r.powf(kappa)).collect();
    let y: Vec<S> = rows.iter().map(|(_, _, e)| e.mean).collect();
    let excess_fit = if rows.len() >= 3 {
        fit_two_regressors(&x1, &x2, &y)
    } else {
        (S::zero(), S::zero(), S::infinity())
    };
    Ok(FracBvReport { rows, gronwall_c, kappa, excess_fit })
}

// ---------------------------------------------------------------------------
// vanishing-viscosity Cauchy study

/// Pairwise distances of the viscous family at the final time under shared
/// paths.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy<S: Scalar> {
    pub eps_list: Vec<S>,
    /// `E |u^{eps_i}(T) - u^{eps_j}(T)|_{1,phi}` for consecutive pairs.
    pub consecutive: Vec<MeanCi<S>>,
    /// Full pairwise table `(i, j, distance)`, `i < j`.
    pub pairwise: Vec<(usize, usize, MeanCi<S>)>,
}

impl<S: Scalar> ConvergenceStudy<S> {
    pub fn strictly_decreasing(&self) -> bool {
        self.consecutive.windows(2).all(|w| w[1].mean < w[0].mean)
    }
}

pub fn epsilon_convergence_study<S: Scalar>(
    cfg_base: &SolverConfig<S>,
    eps_list: &[S],
    u0: &GridField<S>,
    n_mc: usize,
    seed: u64,
) -> Result<ConvergenceStudy<S>> {
    if eps_list.len() < 2 {
        return Ok(ConvergenceStudy {
            eps_list: eps_list.to_vec(),
            consecutive: vec![],
            pairwise: vec![],
        });
    }
    let grid = cfg_base.grid;
    let dx = grid.dx();
    let phi = cfg_base.weight.sample(grid);
    let m = eps_list.len();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg_base.space, cfg_base.dt, cfg_base.n_steps, seed, i as u64)?;
        let finals: Vec<Vec<S>> = eps_list
            .iter()
            .map(|&eps| {
                let cfg = coupled_cfg(cfg_base, eps);
                Ok(crate::solver::solve_with_observer(&cfg, u0, &path, |_, _, _| {})?
                    .values()
                    .to_vec())
            })
            .collect::<Result<_>>()?;
        let mut dists = Vec::with_capacity(m * (m - 1) / 2);
        for i1 in 0..m {
            for j1 in (i1 + 1)..m {
                let diff: Vec<S> = finals[i1]
                    .iter()
                    .zip(&finals[j1])
                    .map(|(&a, &b)| a - b)
                    .collect();
                dists.push(lp_norm_sampled(&diff, S::one(), &phi, dx));
            }
        }
        Ok(dists)
    })?;
    let mut pairwise = Vec::new();
    let mut idx = 0usize;
    for i1 in 0..m {
        for j1 in (i1 + 1)..m {
            let vals: Vec<S> = per_sample.iter().map(|s| s[idx]).collect();
            pairwise.push((i1, j1, mean_ci95(&vals)));
            idx += 1;
        }
    }
    let consecutive = (0..m - 1)
        .map(|i1| {
            pairwise
                .iter()
                .find(|(a, b, _)| *a == i1 && *b == i1 + 1)
                .map(|(_, _, ci)| *ci)
                .unwrap()
        })
        .collect();
    Ok(ConvergenceStudy { eps_list: eps_list.to_vec(), consecutive, pairwise })
}

/// Distance of the marching solver to the closed-form solution of its
/// inviscid limit, per viscosity, with the fitted slope of
/// `log dist ~ log eps`. The exact solution is the per-mode closed form of
/// the same discretisation at `eps = 0` (matching numerical dissipation),
/// so the measured rate isolates the viscosity scaling.
pub fn linear_additive_rate_study<S: Scalar>(
    cfg_base: &SolverConfig<S>,
    eps_list: &[S],
    u0: &GridField<S>,
    n_mc: usize,
    seed: u64,
) -> Result<(Vec<MeanCi<S>>, LineFit<S>)> {
    let grid = cfg_base.grid;
    let dx = grid.dx();
    let phi = cfg_base.weight.sample(grid);
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg_base.space, cfg_base.dt, cfg_base.n_steps, seed, i as u64)?;
        let exact = {
            let cfg0 = coupled_cfg(cfg_base, S::zero());
            crate::solver::linear_additive_closed_form(&cfg0, u0, &path)?
        };
        eps_list
            .iter()
            .map(|&eps| {
                let cfg = coupled_cfg(cfg_base, eps);
                let f = crate::solver::solve_with_observer(&cfg, u0, &path, |_, _, _| {})?;
                let diff: Vec<S> = f
                    .values()
                    .iter()
                    .zip(exact.values())
                    .map(|(&a, &b)| a - b)
                    .collect();
                Ok(lp_norm_sampled(&diff, S::one(), &phi, dx))
            })
            .collect()
    })?;
    let dists: Vec<MeanCi<S>> = (0..eps_list.len())
        .map(|ei| {
            let vals: Vec<S> = per_sample.iter().map(|s| s[ei]).collect();
            mean_ci95(&vals)
        })
        .collect();
    let lx: Vec<S> = eps_list.iter().map(|&e| e.ln()).collect();
    let ly: Vec<S> = dists.iter().map(|d| d.mean.ln()).collect();
    Ok((dists, fit_line(&lx, &ly)))
}
