//! A-priori-bound diagnostics for the viscous solver: continuous dependence
//! on the data, weighted moment curves, spatial-derivative energies, and the
//! closed-form oracle for the linear/additive configuration.

use super::{solve_trajectory, solve_with_observer, SolverConfig};
use crate::grid::GridField;
use crate::mc;
use crate::noise::{NoisePath, NoiseSpace, SigmaCoeff, SigmaFamily};
use crate::scalar::{c, cu, Scalar};
use crate::stats::{mean_ci95, MeanCi};
use crate::weights::lp_norm_sampled;
use crate::{Error, Result};
use num_complex::Complex;

/// Lipschitz distance `|sigma_1 - sigma_2|_Lip = |M_{sigma_1 - sigma_2}|_{L2(Z)}`,
/// with the growth and Lipschitz sups of the difference coefficient taken
/// numerically over a dense `(x, u)` sample.
pub fn sigma_lip_distance<S: Scalar>(
    s1: &SigmaCoeff<S>,
    s2: &SigmaCoeff<S>,
    space: &NoiseSpace<S>,
    half_width: S,
) -> S {
    let m = space.m();
    let mut per_node = vec![S::zero(); m];
    for (k, out) in per_node.iter_mut().enumerate() {
        let mut growth = S::zero();
        let mut lip = S::zero();
        for ix in 0..=8 {
            let x = (cu::<S>(ix) / c::<S>(4.0) - S::one()) * half_width;
            for iu in 0..=800 {
                let u = c::<S>(-20.0 + iu as f64 * 0.05);
                let d = s1.eval(x, u, k) - s2.eval(x, u, k);
                let dd = s1.deriv_u(x, u, k) - s2.deriv_u(x, u, k);
                growth = growth.max(d.abs() / (S::one() + u.abs()));
                lip = lip.max(dd.abs());
            }
        }
        *out = growth + lip;
    }
    let sq: Vec<S> = per_node
        .iter()
        .zip(space.mu())
        .map(|(&e, &mu)| mu * e * e)
        .collect();
    crate::stats::pairwise_sum(&sq).sqrt()
}

/// Report of one continuous-dependence probe on a shared path.
#[derive(Debug, Clone, Copy)]
pub struct ContDepProbe<S> {
    /// `sup_n e^{-beta t_n / p} |u_1(t_n) - u_2(t_n)|_{p,phi}`.
    pub lhs: S,
    /// Assembled right-hand side (sum of the three data terms).
    pub rhs: S,
    pub u0_term: S,
    pub flux_term: S,
    pub sigma_term: S,
    pub beta: S,
}

/// Solve both configurations on the same noise path and assemble the
/// continuous-dependence bound
/// `|u1 - u2|_{beta,p} <= C ( |u01 - u02|_{p,phi} + |f1-f2|_Lip |u1|_{beta,p}
///  + |sigma1-sigma2|_Lip (|phi|_1 + |u1|_{beta,p}) )`.
pub fn continuous_dependence_probe<S: Scalar>(
    cfg1: &SolverConfig<S>,
    cfg2: &SolverConfig<S>,
    u0_1: &GridField<S>,
    u0_2: &GridField<S>,
    path: &NoisePath<S>,
    p: S,
) -> Result<ContDepProbe<S>> {
    if cfg1.grid != cfg2.grid || cfg1.eps != cfg2.eps || cfg1.n_steps != cfg2.n_steps {
        return Err(Error::Config(
            "continuous dependence probe needs shared grid, viscosity and horizon".into(),
        ));
    }
    let beta = super::beta_threshold(cfg1, c::<S>(0.5));
    let t1 = solve_trajectory(cfg1, u0_1, path)?;
    let t2 = solve_trajectory(cfg2, u0_2, path)?;
    let phi = cfg1.weight.sample(cfg1.grid);
    let dx = cfg1.grid.dx();
    let mut lhs = S::zero();
    let mut u1_beta = S::zero();
    for n in 0..t1.n_slices() {
        let decay = (-beta * t1.time(n) / p).exp();
        let diff: Vec<S> = t1
            .slice(n)
            .iter()
            .zip(t2.slice(n))
            .map(|(&a, &b)| a - b)
            .collect();
        lhs = lhs.max(decay * lp_norm_sampled(&diff, p, &phi, dx));
        u1_beta = u1_beta.max(decay * lp_norm_sampled(t1.slice(n), p, &phi, dx));
    }
    let u0_term = {
        let diff = u0_1.sub(u0_2);
        lp_norm_sampled(diff.values(), p, &phi, dx)
    };
    let flux_term = cfg1.flux.lip_distance(&cfg2.flux) * u1_beta;
    let sigma_term = sigma_lip_distance(&cfg1.sigma, &cfg2.sigma, &cfg1.space, cfg1.grid.half_width())
        * (cfg1.weight.l1_norm() + u1_beta);
    Ok(ContDepProbe {
        lhs,
        rhs: u0_term + flux_term + sigma_term,
        u0_term,
        flux_term,
        sigma_term,
        beta,
    })
}

/// Monte Carlo curve `t -> E |u(t)|_{p,phi}^p` with 95% confidence bands.
///
/// `p` must be an even integer >= 2. Returns one entry per snapshot step.
pub fn lp_moment_curve<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    p: S,
    n_mc: usize,
    snapshot_steps: &[usize],
    seed: u64,
) -> Result<Vec<(S, MeanCi<S>)>> {
    let p_f = p.to_f64().unwrap();
    if p_f < 2.0 || p_f.fract() != 0.0 || (p_f as u64) % 2 != 0 {
        return Err(Error::InvalidInput("moment curve needs even p >= 2".into()));
    }
    let phi = cfg.weight.sample(cfg.grid);
    let dx = cfg.grid.dx();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let mut vals = Vec::with_capacity(snapshot_steps.len());
        solve_with_observer(cfg, u0, &path, |n, _, u| {
            if snapshot_steps.contains(&n) {
                let norm = lp_norm_sampled(u, p, &phi, dx);
                vals.push(norm.powf(p));
            }
        })?;
        Ok(vals)
    })?;
    Ok(snapshot_steps
        .iter()
        .enumerate()
        .map(|(si, &step)| {
            let samples: Vec<S> = per_sample.iter().map(|v| v[si]).collect();
            (cfg.dt * cu::<S>(step), mean_ci95(&samples))
        })
        .collect())
}

/// Monte Carlo curve `t -> E |d_x u(t)|_{2,phi}^2` (diagnostic; expected to
/// grow as the viscosity shrinks).
pub fn spatial_derivative_bound<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    n_mc: usize,
    snapshot_steps: &[usize],
    seed: u64,
) -> Result<Vec<(S, MeanCi<S>)>> {
    let phi = cfg.weight.sample(cfg.grid);
    let dx = cfg.grid.dx();
    let per_sample: Vec<Vec<S>> = mc::try_run_samples(n_mc, |i| {
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, seed, i as u64)?;
        let mut plan = crate::heat::HeatPlan::new(cfg.grid);
        let mut vals = Vec::with_capacity(snapshot_steps.len());
        solve_with_observer(cfg, u0, &path, |n, _, u| {
            if snapshot_steps.contains(&n) {
                let mut d = u.to_vec();
                plan.derivative_in_place(&mut d);
                let norm = lp_norm_sampled(&d, c::<S>(2.0), &phi, dx);
                vals.push(norm * norm);
            }
        })?;
        Ok(vals)
    })?;
    Ok(snapshot_steps
        .iter()
        .enumerate()
        .map(|(si, &step)| {
            let samples: Vec<S> = per_sample.iter().map(|v| v[si]).collect();
            (cfg.dt * cu::<S>(step), mean_ci95(&samples))
        })
        .collect())
}

/// Closed-form evaluation of the linear-flux/additive-noise scheme by a
/// per-mode recursion in Fourier space; an independent oracle for the
/// marching solver (and the exact solution of its inviscid `eps = 0` limit).
pub fn linear_additive_closed_form<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    path: &NoisePath<S>,
) -> Result<GridField<S>> {
    let super::FluxFn::Linear { a } = cfg.flux else {
        return Err(Error::InvalidInput("closed form needs a linear flux".into()));
    };
    if cfg.sigma.family() != SigmaFamily::Additive {
        return Err(Error::InvalidInput("closed form needs additive noise".into()));
    }
    let grid = cfg.grid;
    let n = grid.n_x();
    let dx = grid.dx();
    let mut planner = rustfft::FftPlanner::<S>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut modes: Vec<Complex<S>> = u0
        .values()
        .iter()
        .map(|&v| Complex::new(v, S::zero()))
        .collect();
    fwd.process(&mut modes);
    // Per-mode multipliers: heat symbol and the Lax-Friedrichs symbol
    // lambda = i a sin(xi dx)/dx + (|a|/dx)(1 - cos(xi dx)).
    let mults: Vec<Complex<S>> = (0..n)
        .map(|k| {
            let xi = grid.wavenumber(k);
            let lam = Complex::new(
                a.abs() / dx * (S::one() - (xi * dx).cos()),
                a * (xi * dx).sin() / dx,
            );
            let heat = (-cfg.eps * cfg.dt * xi * xi).exp();
            (Complex::new(S::one(), S::zero()) - lam * cfg.dt) * heat
        })
        .collect();
    let heat0: Vec<S> = (0..n)
        .map(|k| {
            let xi = grid.wavenumber(k);
            (-cfg.eps * cfg.dt * xi * xi).exp()
        })
        .collect();
    for step in 0..cfg.n_steps {
        let chi = {
            let terms: Vec<S> = cfg
                .sigma
                .node_amplitudes()
                .iter()
                .zip(path.row(step))
                .map(|(&g, &w)| g * w)
                .collect();
            crate::stats::pairwise_sum(&terms)
        };
        for k in 0..n {
            modes[k] = modes[k] * mults[k];
        }
        // additive forcing is spatially constant: only mode 0, scaled by n
        modes[0] += Complex::new(chi * cu::<S>(n) * heat0[0], S::zero());
    }
    inv.process(&mut modes);
    let scale = S::one() / cu::<S>(n);
    let mut out = GridField::from_values(grid, modes.iter().map(|z| z.re * scale).collect())?;
    out.t = cfg.horizon();
    Ok(out)
}
