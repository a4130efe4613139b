//! Picard iteration on the discrete mild map.
//!
//! The marching scheme is the fixed point of the trajectory map
//!
//! ```text
//! S(U)(t_{n+1}) = Phi(dt) * [ S(U)(t_n) - dt D_x f(U(t_n)) + noise_n(U(t_n)) ],
//! S(U)(0) = u0,
//! ```
//!
//! iterated from the zero trajectory. The iteration exists as a
//! cross-validation oracle on small grids; its contraction factor in the
//! exponentially weighted norm is computable from the kernel constants and
//! yields the threshold beta used by the contraction check.

use super::{SolverConfig, Trajectory};
use crate::grid::GridField;
use crate::heat::{kappa_1, kappa_2, HeatPlan};
use crate::noise::NoisePath;
use crate::quad::gauss_legendre_composite;
use crate::scalar::{c, cu, Scalar};
use crate::weights::lp_norm_sampled;
use crate::{Error, Result};

const MAX_NX: usize = 128;
const MAX_STEPS: usize = 256;

/// Result of a Picard run.
#[derive(Debug, Clone)]
pub struct PicardOutcome<S: Scalar> {
    pub final_trajectory: Trajectory<S>,
    /// `|u^{m+1} - u^m|` in the beta-weighted norm, one entry per iteration.
    pub distances: Vec<S>,
    /// Consecutive distance ratios.
    pub ratios: Vec<S>,
    /// Squared weighted L2 distance per iteration and time slice, for
    /// batch-averaged contraction measurements.
    pub sq_dist_per_time: Vec<Vec<S>>,
}

/// Theoretical contraction factor of the mild map in the beta-norm:
///
/// ```text
/// delta_beta = |f|_Lip kappa_2 (2 sqrt(T/eps))^{1/2}
///              (int_0^T e^{-beta s} / sqrt(eps s) ds)^{1/2}
///            + |M|_{L2(Z)} kappa_1 / sqrt(beta)
/// ```
pub fn beta_contraction_factor<S: Scalar>(cfg: &SolverConfig<S>, beta: S) -> S {
    let t_end = cfg.horizon();
    let eps = cfg.eps.max(c::<S>(1e-300));
    // int_0^T e^{-beta s}/sqrt(eps s) ds = (2/sqrt(eps)) int_0^{sqrt(T)} e^{-beta q^2} dq
    let time_int = c::<S>(2.0) / eps.sqrt()
        * gauss_legendre_composite(&|q: S| (-beta * q * q).exp(), S::zero(), t_end.sqrt(), 24, 8);
    let flux_part = cfg.flux.lip()
        * c::<S>(kappa_2(1))
        * (c::<S>(2.0) * (t_end / eps).sqrt()).sqrt()
        * time_int.sqrt();
    let noise_part = cfg.sigma.m_l2() * c::<S>(kappa_1(1)) / beta.sqrt();
    flux_part + noise_part
}

/// Smallest beta with `delta_beta <= target`, by bisection.
pub fn beta_threshold<S: Scalar>(cfg: &SolverConfig<S>, target: S) -> S {
    let mut lo = c::<S>(1e-6);
    let mut hi = c::<S>(1.0);
    while beta_contraction_factor(cfg, hi) > target {
        hi = hi * c::<S>(2.0);
        if hi > c::<S>(1e15) {
            return hi;
        }
    }
    for _ in 0..200 {
        let mid = (lo + hi) / c::<S>(2.0);
        if beta_contraction_factor(cfg, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// One application of the mild map with nonlinear terms frozen at `source`.
fn mild_apply<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &[S],
    path: &NoisePath<S>,
    source: &Trajectory<S>,
    plan: &mut HeatPlan<S>,
) -> Trajectory<S> {
    let n_x = cfg.grid.n_x();
    let dx = cfg.grid.dx();
    let mut traj = Trajectory::with_capacity(cfg.grid, cfg.dt, cfg.n_steps + 1);
    let mut v = u0.to_vec();
    traj.push(&v);
    let mut drift = vec![S::zero(); n_x];
    let mod_profile: Vec<S> = (0..n_x).map(|j| cfg.sigma.x_factor(cfg.grid.x(j))).collect();
    for n in 0..cfg.n_steps {
        let src = source.slice(n);
        super::flux::llf_divergence(&cfg.flux, src, dx, &mut drift);
        let chi = {
            let terms: Vec<S> = cfg
                .sigma
                .node_amplitudes()
                .iter()
                .zip(path.row(n))
                .map(|(&g, &w)| g * w)
                .collect();
            crate::stats::pairwise_sum(&terms)
        };
        for j in 0..n_x {
            v[j] = v[j] - cfg.dt * drift[j]
                + cfg.sigma.u_factor(src[j]) * mod_profile[j] * chi;
        }
        plan.convolve_in_place(&mut v, cfg.eps * cfg.dt);
        traj.push(&v);
    }
    traj
}

/// Iterate the discrete mild map from the zero trajectory.
///
/// Restricted to small grids; returns the final iterate and the contraction
/// history. Non-contraction at the requested beta shows up as ratios >= 1
/// in the outcome (reported, not thrown).
pub fn picard_mild_solve<S: Scalar>(
    cfg: &SolverConfig<S>,
    u0: &GridField<S>,
    path: &NoisePath<S>,
    n_iter: usize,
    beta: S,
) -> Result<PicardOutcome<S>> {
    if cfg.grid.n_x() > MAX_NX || cfg.n_steps > MAX_STEPS {
        return Err(Error::Config(format!(
            "picard oracle is restricted to n_x <= {MAX_NX}, n_steps <= {MAX_STEPS}"
        )));
    }
    cfg.validate()?;
    let mut plan = HeatPlan::new(cfg.grid);
    let phi = cfg.weight.sample(cfg.grid);
    let dx = cfg.grid.dx();

    let mut current = {
        // zero starting trajectory
        let mut t = Trajectory::with_capacity(cfg.grid, cfg.dt, cfg.n_steps + 1);
        let zeros = vec![S::zero(); cfg.grid.n_x()];
        for _ in 0..=cfg.n_steps {
            t.push(&zeros);
        }
        t
    };
    let mut distances = Vec::with_capacity(n_iter);
    let mut sq_dist_per_time = Vec::with_capacity(n_iter);
    for _ in 0..n_iter {
        let next = mild_apply(cfg, u0.values(), path, &current, &mut plan);
        let mut sq_per_t = Vec::with_capacity(cfg.n_steps + 1);
        for n in 0..=cfg.n_steps {
            let diff: Vec<S> = next
                .slice(n)
                .iter()
                .zip(current.slice(n))
                .map(|(&a, &b)| a - b)
                .collect();
            let norm = lp_norm_sampled(&diff, c::<S>(2.0), &phi, dx);
            sq_per_t.push(norm * norm);
        }
        let dist = (0..=cfg.n_steps)
            .map(|n| ((-beta * cfg.dt * cu::<S>(n)).exp() * sq_per_t[n]).sqrt())
            .fold(S::zero(), S::max);
        distances.push(dist);
        sq_dist_per_time.push(sq_per_t);
        current = next;
    }
    let ratios = distances
        .windows(2)
        .map(|w| if w[0] > S::zero() { w[1] / w[0] } else { S::zero() })
        .collect();
    Ok(PicardOutcome { final_trajectory: current, distances, ratios, sq_dist_per_time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1d;
    use crate::noise::{NoiseSpace, SigmaCoeff, SigmaFamily};
    use crate::solver::{solve_trajectory, FluxFn, Scheme};
    use crate::weights::Weight;

    fn small_cfg() -> SolverConfig<f64> {
        let grid = Grid1d::new(64, 10.0).unwrap();
        let space = NoiseSpace::uniform(4).unwrap();
        let sigma = SigmaCoeff::new(SigmaFamily::MultSin, 0.4, &space, 10.0).unwrap();
        SolverConfig {
            grid,
            eps: 0.1,
            dt: 1e-3,
            n_steps: 200,
            flux: FluxFn::BurgersClipped { u_max: 1.5 },
            sigma,
            space,
            weight: Weight::poly(3).unwrap(),
            scheme: Scheme::PicardMild,
        }
    }

    #[test]
    fn rejects_large_grids() {
        let mut cfg = small_cfg();
        cfg.grid = Grid1d::new(512, 10.0).unwrap();
        let u0 = GridField::zeros(cfg.grid);
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 1, 0).unwrap();
        assert!(picard_mild_solve(&cfg, &u0, &path, 3, 10.0).is_err());
    }

    #[test]
    fn heat_only_converges_in_one_iteration() {
        // f = 0, sigma = 0: the map no longer depends on the source
        // trajectory, so iterate 2 equals iterate 1.
        let mut cfg = small_cfg();
        cfg.flux = FluxFn::Linear { a: 0.0 };
        cfg.sigma = SigmaCoeff::new(SigmaFamily::Additive, 0.0, &cfg.space, 10.0).unwrap();
        let u0 = GridField::from_fn(cfg.grid, |x| (x / 3.0).sin());
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 1, 0).unwrap();
        let out = picard_mild_solve(&cfg, &u0, &path, 3, 5.0).unwrap();
        assert!(out.distances[1] == 0.0 && out.distances[2] == 0.0);
        // and the fixed point is the heat trajectory
        let march = solve_trajectory(&cfg, &u0, &path).unwrap();
        for n in [0, 50, 200] {
            let d: f64 = out
                .final_trajectory
                .slice(n)
                .iter()
                .zip(march.slice(n))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn contraction_above_threshold() {
        let cfg = small_cfg();
        let beta = beta_threshold(&cfg, 0.9);
        assert!(beta_contraction_factor(&cfg, beta) <= 0.9 + 1e-9);
        assert!(beta_contraction_factor(&cfg, beta / 4.0) > 0.9);
        let u0 = GridField::from_fn(cfg.grid, |x| 0.6 * (x / 4.0).cos());
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 21, 0).unwrap();
        let out = picard_mild_solve(&cfg, &u0, &path, 8, beta).unwrap();
        for (i, r) in out.ratios.iter().enumerate().skip(2) {
            assert!(*r < 0.9, "iteration {i}: ratio {r}");
        }
    }

    #[test]
    fn fixed_point_matches_marching_scheme() {
        let cfg = small_cfg();
        let u0 = GridField::from_fn(cfg.grid, |x| 0.5 * (x / 5.0).sin());
        let path = NoisePath::sample(&cfg.space, cfg.dt, cfg.n_steps, 4, 2).unwrap();
        // enough iterations to pin every slice exactly
        let out = picard_mild_solve(&cfg, &u0, &path, cfg.n_steps + 1, 20.0).unwrap();
        let march = solve_trajectory(&cfg, &u0, &path).unwrap();
        let phi = cfg.weight.sample(cfg.grid);
        let mut worst = 0.0f64;
        for n in 0..=cfg.n_steps {
            let diff: Vec<f64> = out
                .final_trajectory
                .slice(n)
                .iter()
                .zip(march.slice(n))
                .map(|(a, b)| a - b)
                .collect();
            worst = worst.max(lp_norm_sampled(&diff, 2.0, &phi, cfg.grid.dx()));
        }
        assert!(worst < 1e-11, "distance {worst}");
    }
}
