//! Discretised space-time Gaussian noise over a finite node set, and the
//! noise coefficient `sigma(x, u, z)`.
//!
//! The driving noise `W(dt, dz)` lives on a finite measure space
//! `Z = {z_1, ..., z_m}` with weights `mu_k > 0`; a path is the matrix of
//! independent `N(0, dt * mu_k)` increments over (time step x node) cells.
//! One ChaCha stream per `(seed, stream_id)` pair makes sampling
//! reproducible independently of the parallel schedule.

use crate::grid::GridField;
use crate::scalar::{c, cu, Scalar};
use crate::weights::Weight;
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

/// Finite noise space: abstract nodes `z_1..z_m` with masses `mu_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpace<S: Scalar> {
    mu: Vec<S>,
}

impl<S: Scalar> NoiseSpace<S> {
    pub fn new(mu: Vec<S>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidInput("noise space needs at least one node".into()));
        }
        if mu.iter().any(|&m| !(m > S::zero())) {
            return Err(Error::InvalidInput("node masses must be positive".into()));
        }
        Ok(Self { mu })
    }

    /// `m` nodes of equal mass `1/m`.
    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![S::one() / cu::<S>(m.max(1)); m])
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.mu.len()
    }

    #[inline]
    pub fn mu(&self) -> &[S] {
        &self.mu
    }

    /// `int_Z f dmu` for per-node values.
    pub fn integrate(&self, f: &[S]) -> S {
        debug_assert_eq!(f.len(), self.mu.len());
        let terms: Vec<S> = f.iter().zip(&self.mu).map(|(&a, &b)| a * b).collect();
        crate::stats::pairwise_sum(&terms)
    }
}

/// A realisation of the noise increments `dW[n][k] ~ N(0, dt * mu_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath<S: Scalar> {
    dt: S,
    n_steps: usize,
    m: usize,
    seed: u64,
    stream_id: u64,
    /// Row-major `[n_steps][m]`.
    increments: Vec<S>,
}

fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream_id.to_le_bytes());
    key[16..24].copy_from_slice(b"sclnoise");
    ChaCha8Rng::from_seed(key)
}

impl<S: Scalar> NoisePath<S> {
    /// Sample a fresh path; deterministic in `(seed, stream_id)`.
    pub fn sample(
        space: &NoiseSpace<S>,
        dt: S,
        n_steps: usize,
        seed: u64,
        stream_id: u64,
    ) -> Result<Self> {
        if !(dt > S::zero()) {
            return Err(Error::InvalidInput("dt must be positive".into()));
        }
        let m = space.m();
        let std: Vec<S> = space.mu().iter().map(|&mu| (dt * mu).sqrt()).collect();
        let mut rng = stream_rng(seed, stream_id);
        let mut increments = Vec::with_capacity(n_steps * m);
        for _ in 0..n_steps {
            for s in &std {
                increments.push(*s * S::standard_normal(&mut rng));
            }
        }
        Ok(Self { dt, n_steps, m, seed, stream_id, increments })
    }

    #[inline]
    pub fn dt(&self) -> S {
        self.dt
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Increments of step `n`, one per node.
    #[inline]
    pub fn row(&self, n: usize) -> &[S] {
        &self.increments[n * self.m..(n + 1) * self.m]
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> S {
        self.increments[n * self.m + k]
    }

    pub fn set(&mut self, n: usize, k: usize, v: S) {
        self.increments[n * self.m + k] = v;
    }

    /// Copy of the path with `dW[n][k] += eps`; all other cells bit-identical.
    pub fn shifted(&self, n: usize, k: usize, eps: S) -> Result<Self> {
        if n >= self.n_steps || k >= self.m {
            return Err(Error::IndexOutOfRange(format!(
                "shift cell ({n}, {k}) outside {} x {}",
                self.n_steps, self.m
            )));
        }
        let mut out = self.clone();
        out.increments[n * self.m + k] += eps;
        Ok(out)
    }

    /// Aggregate pairs of consecutive steps into one coarse step; the coarse
    /// path is the same Brownian sheet sampled at `2 dt`. Requires an even
    /// step count.
    pub fn coarsened(&self) -> Result<Self> {
        if self.n_steps % 2 != 0 {
            return Err(Error::InvalidInput("coarsening needs an even step count".into()));
        }
        let mut increments = Vec::with_capacity(self.increments.len() / 2);
        for n in 0..self.n_steps / 2 {
            for k in 0..self.m {
                increments.push(self.get(2 * n, k) + self.get(2 * n + 1, k));
            }
        }
        Ok(Self {
            dt: self.dt + self.dt,
            n_steps: self.n_steps / 2,
            m: self.m,
            seed: self.seed,
            stream_id: self.stream_id,
            increments,
        })
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(8 * (5 + self.increments.len()) + 12);
        buf.extend_from_slice(b"SCLNOISE");
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        buf.extend_from_slice(&self.stream_id.to_le_bytes());
        buf.extend_from_slice(&self.dt.to_f64().unwrap().to_le_bytes());
        buf.extend_from_slice(&(self.n_steps as u64).to_le_bytes());
        buf.extend_from_slice(&(self.m as u64).to_le_bytes());
        for v in &self.increments {
            buf.extend_from_slice(&v.to_f64().unwrap().to_le_bytes());
        }
        buf
    }

    /// Binary round-trip format (64-bit floats) so experiments can replay
    /// identical noise across solver variants.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        if buf.len() < 52 || &buf[..8] != b"SCLNOISE" {
            return Err(Error::InvalidInput("not a noise path file".into()));
        }
        let u64_at = |o: usize| u64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        let seed = u64_at(12);
        let stream_id = u64_at(20);
        let dt = c::<S>(f64_at(28));
        let n_steps = u64_at(36) as usize;
        let m = u64_at(44) as usize;
        let need = 52 + 8 * n_steps * m;
        if buf.len() != need {
            return Err(Error::InvalidInput("noise path file truncated".into()));
        }
        let increments = (0..n_steps * m).map(|i| c::<S>(f64_at(52 + 8 * i))).collect();
        Ok(Self { dt, n_steps, m, seed, stream_id, increments })
    }

    /// Content hash of the path; two-solution comparisons log it to prove
    /// the noise coupling.
    pub fn content_hash(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        let mut s = String::with_capacity(16);
        for b in &digest[..8] {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

/// Noise coefficient families. All built-ins are separable,
/// `sigma(x, u, z_k) = g_k * s(u) * m(x)`, which the solver exploits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaFamily {
    /// `sigma = g_k` (independent of `u`): additive noise.
    Additive,
    /// `sigma = g_k sin(u)`.
    MultSin,
    /// `sigma = g_k u / (1 + u^2)`.
    MultRational,
    /// `sigma = g_k sin(u) (1 + m_amp sin(pi x / L))`: spatially modulated,
    /// exercises the Hoelder-in-x assumption with kappa = 1/2.
    Modulated,
}

/// The coefficient together with its assumption envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCoeff<S: Scalar> {
    family: SigmaFamily,
    /// Per-node amplitudes `g_k`.
    g: Vec<S>,
    /// Envelope `M(z_k)` for the Lipschitz/growth assumptions.
    m_env: Vec<S>,
    /// `|M|_{L^2(Z)}` of the envelope.
    m_l2: S,
    /// `|sigma|_Lip = |M_sigma|_{L^2(Z)}` (growth sup + Lipschitz sup).
    lip_norm: S,
    /// Hoelder exponent of the spatial assumption, in `(0, 1/2]`.
    kappa: S,
    /// Torus half-width entering the spatial modulation profile.
    half_width: S,
    mod_amp: S,
    /// Node masses of the space the coefficient was built on.
    mu: Vec<S>,
}

impl<S: Scalar> SigmaCoeff<S> {
    /// Build a coefficient with base amplitude `g` on `space`; node
    /// amplitudes are staggered as `g_k = g (1 + k / (2m))` so the nodes are
    /// distinguishable. The assumption sweeps run at construction time.
    pub fn new(
        family: SigmaFamily,
        g: S,
        space: &NoiseSpace<S>,
        half_width: S,
    ) -> Result<Self> {
        let m = space.m();
        let amps: Vec<S> = (0..m)
            .map(|k| g * (S::one() + cu::<S>(k) / cu::<S>(2 * m)))
            .collect();
        let mod_amp = c::<S>(0.5);
        // Numerical sups of |s(u)|/(1+|u|) and |s'(u)| over a wide u-range.
        let (mut growth_sup, mut lip_sup) = (S::zero(), S::zero());
        for i in 0..=4000 {
            let u = c::<S>(-50.0 + i as f64 * 0.025);
            let s = Self::u_shape(family, u);
            let ds = Self::u_shape_deriv(family, u);
            growth_sup = growth_sup.max(s.abs() / (S::one() + u.abs()));
            lip_sup = lip_sup.max(ds.abs());
        }
        let x_sup = match family {
            SigmaFamily::Modulated => S::one() + mod_amp,
            _ => S::one(),
        };
        let env_factor = x_sup * growth_sup.max(lip_sup).max(match family {
            // Spatial Hoelder envelope |g_k| |m'|_inf with |x-y|^{kappa+1/2} = |x-y|.
            SigmaFamily::Modulated => mod_amp * S::PI() / half_width,
            _ => S::zero(),
        });
        let m_env: Vec<S> = amps.iter().map(|&a| a.abs() * env_factor).collect();
        let sq: Vec<S> = m_env.iter().zip(space.mu()).map(|(&e, &mu)| mu * e * e).collect();
        let m_l2 = crate::stats::pairwise_sum(&sq).sqrt();
        let lip_terms: Vec<S> = amps
            .iter()
            .zip(space.mu())
            .map(|(&a, &mu)| {
                let msig = a.abs() * x_sup * (growth_sup + lip_sup);
                mu * msig * msig
            })
            .collect();
        let lip_norm = crate::stats::pairwise_sum(&lip_terms).sqrt();
        let coeff = Self {
            family,
            g: amps,
            m_env,
            m_l2,
            lip_norm,
            kappa: c::<S>(0.5),
            half_width,
            mod_amp,
            mu: space.mu().to_vec(),
        };
        coeff.validate(space)?;
        Ok(coeff)
    }

    fn u_shape(family: SigmaFamily, u: S) -> S {
        match family {
            SigmaFamily::Additive => S::one(),
            SigmaFamily::MultSin | SigmaFamily::Modulated => u.sin(),
            SigmaFamily::MultRational => u / (S::one() + u * u),
        }
    }

    fn u_shape_deriv(family: SigmaFamily, u: S) -> S {
        match family {
            SigmaFamily::Additive => S::zero(),
            SigmaFamily::MultSin | SigmaFamily::Modulated => u.cos(),
            SigmaFamily::MultRational => {
                let q = S::one() + u * u;
                (S::one() - u * u) / (q * q)
            }
        }
    }

    #[inline]
    pub fn family(&self) -> SigmaFamily {
        self.family
    }

    #[inline]
    pub fn node_amplitudes(&self) -> &[S] {
        &self.g
    }

    #[inline]
    pub fn m_envelope(&self) -> &[S] {
        &self.m_env
    }

    #[inline]
    pub fn m_l2(&self) -> S {
        self.m_l2
    }

    #[inline]
    pub fn lip_norm(&self) -> S {
        self.lip_norm
    }

    #[inline]
    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn is_x_dependent(&self) -> bool {
        matches!(self.family, SigmaFamily::Modulated)
    }

    /// `u`-dependent factor `s(u)`.
    #[inline]
    pub fn u_factor(&self, u: S) -> S {
        Self::u_shape(self.family, u)
    }

    /// `d/du s(u)`.
    #[inline]
    pub fn du_factor(&self, u: S) -> S {
        Self::u_shape_deriv(self.family, u)
    }

    /// Spatial factor `m(x)`.
    #[inline]
    pub fn x_factor(&self, x: S) -> S {
        match self.family {
            SigmaFamily::Modulated => {
                S::one() + self.mod_amp * (S::PI() * x / self.half_width).sin()
            }
            _ => S::one(),
        }
    }

    /// `sigma(x, u, z_k)`.
    #[inline]
    pub fn eval(&self, x: S, u: S, k: usize) -> S {
        self.g[k] * self.u_factor(u) * self.x_factor(x)
    }

    /// `d/du sigma(x, u, z_k)`, the coefficient of the tangent equation.
    #[inline]
    pub fn deriv_u(&self, x: S, u: S, k: usize) -> S {
        self.g[k] * self.du_factor(u) * self.x_factor(x)
    }

    /// Assumption sweeps: Lipschitz in `u`, linear growth, and spatial
    /// Hoelder continuity against the stored envelope, on a deterministic
    /// sample of points.
    pub fn validate(&self, space: &NoiseSpace<S>) -> Result<()> {
        use rand::Rng;
        let mut rng = stream_rng(0x51_6d_a0, 0);
        let slack = S::one() + c::<S>(1e-9);
        for _ in 0..1000 {
            let x = c::<S>(rng.gen_range(-1.0..1.0)) * self.half_width;
            let y = c::<S>(rng.gen_range(-1.0..1.0)) * self.half_width;
            let u = c::<S>(rng.gen_range(-25.0..25.0));
            let v = c::<S>(rng.gen_range(-25.0..25.0));
            let k = rng.gen_range(0..space.m());
            let m_k = self.m_env[k];
            if (self.eval(x, u, k) - self.eval(x, v, k)).abs() > (u - v).abs() * m_k * slack {
                return Err(Error::InvalidInput(format!(
                    "sigma Lipschitz sweep failed at u={u}, v={v}, k={k}"
                )));
            }
            if self.eval(x, u, k).abs() > m_k * (S::one() + u.abs()) * slack {
                return Err(Error::InvalidInput(format!(
                    "sigma growth sweep failed at u={u}, k={k}"
                )));
            }
            let dist = (x - y).abs();
            let hoelder = dist.powf(self.kappa + c::<S>(0.5));
            if (self.eval(x, u, k) - self.eval(y, u, k)).abs()
                > m_k * hoelder * (S::one() + u.abs()) * slack
            {
                return Err(Error::InvalidInput(format!(
                    "sigma spatial sweep failed at x={x}, y={y}, u={u}"
                )));
            }
        }
        Ok(())
    }
}

/// Hilbert-Schmidt norm of the diffusion operator at state `u`:
/// `|G(u)|_HS^2 = int_Z int sigma^2(x, u(x), z) phi(x) dx dmu(z)`.
pub fn hs_norm_g<S: Scalar>(
    coeff: &SigmaCoeff<S>,
    u: &GridField<S>,
    w: &Weight<S>,
) -> Result<S> {
    if !u.is_finite() {
        return Err(Error::InvalidInput("field has non-finite values".into()));
    }
    let grid = u.grid();
    let phi = w.sample(grid);
    let dx = grid.dx();
    let mut acc = S::zero();
    for k in 0..coeff.g.len() {
        let terms: Vec<S> = (0..grid.n_x())
            .map(|j| {
                let s = coeff.eval(grid.x(j), u.values()[j], k);
                s * s * phi[j]
            })
            .collect();
        acc += crate::stats::pairwise_sum(&terms) * dx * coeff.mu[k];
    }
    Ok(acc.sqrt())
}

/// Parse sigma from its string key: `additive:g`, `mult-sin:g`,
/// `mult-rational:g`, `modulated:g`.
pub fn parse_sigma<S: Scalar>(
    spec: &str,
    space: &NoiseSpace<S>,
    half_width: S,
) -> Result<SigmaCoeff<S>> {
    let (name, g) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("sigma spec `{spec}`: missing amplitude")))?;
    let g: f64 = g
        .parse()
        .map_err(|_| Error::Config(format!("sigma spec `{spec}`: bad amplitude")))?;
    let family = match name {
        "additive" => SigmaFamily::Additive,
        "mult-sin" => SigmaFamily::MultSin,
        "mult-rational" => SigmaFamily::MultRational,
        "modulated" => SigmaFamily::Modulated,
        _ => return Err(Error::Config(format!("unknown sigma family `{name}`"))),
    };
    SigmaCoeff::new(family, c::<S>(g), space, half_width)
}

pub fn sigma_key<S: Scalar>(c: &SigmaCoeff<S>) -> &'static str {
    match c.family() {
        SigmaFamily::Additive => "additive",
        SigmaFamily::MultSin => "mult-sin",
        SigmaFamily::MultRational => "mult-rational",
        SigmaFamily::Modulated => "modulated",
    }
}
