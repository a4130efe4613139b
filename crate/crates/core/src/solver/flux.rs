//! Flux functions and their monotone (Lax-Friedrichs) discretisation.

use crate::scalar::{c, Scalar};
use crate::{Error, Result};

/// Built-in C^1, globally Lipschitz flux families with `f(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxFn<S: Scalar> {
    /// `f(u) = a u`.
    Linear { a: S },
    /// Burgers flux with the slope saturated at `|f'| <= u_max`, so the
    /// global Lipschitz assumption holds honestly:
    /// quadratic on `|u| <= u_max`, linear beyond.
    BurgersClipped { u_max: S },
    /// `f(u) = a sin(u)`: smooth with bounded derivative.
    SmoothSin { a: S },
}

impl<S: Scalar> FluxFn<S> {
    pub fn value(&self, u: S) -> S {
        match *self {
            FluxFn::Linear { a } => a * u,
            FluxFn::BurgersClipped { u_max } => {
                if u.abs() <= u_max {
                    u * u / c::<S>(2.0)
                } else {
                    u_max * u.abs() - u_max * u_max / c::<S>(2.0)
                }
            }
            FluxFn::SmoothSin { a } => a * u.sin(),
        }
    }

    pub fn deriv(&self, u: S) -> S {
        match *self {
            FluxFn::Linear { a } => a,
            FluxFn::BurgersClipped { u_max } => u.max(-u_max).min(u_max),
            FluxFn::SmoothSin { a } => a * u.cos(),
        }
    }

    /// Global Lipschitz constant; doubles as the Lax-Friedrichs dissipation
    /// coefficient.
    pub fn lip(&self) -> S {
        match *self {
            FluxFn::Linear { a } => a.abs(),
            FluxFn::BurgersClipped { u_max } => u_max,
            FluxFn::SmoothSin { a } => a.abs(),
        }
    }

    /// Lipschitz distance `sup |f' - g'|` to another flux, evaluated on a
    /// dense state grid (exact for same-family pairs of built-ins).
    pub fn lip_distance(&self, other: &FluxFn<S>) -> S {
        let mut sup = S::zero();
        for i in 0..=2000 {
            let u = c::<S>(-25.0 + i as f64 * 0.025);
            sup = sup.max((self.deriv(u) - other.deriv(u)).abs());
        }
        sup
    }
}

/// Parse `linear:a`, `burgers:u_max`, `sin:a`.
pub fn parse_flux<S: Scalar>(spec: &str) -> Result<FluxFn<S>> {
    let (name, p) = spec
        .rsplit_once(':')
        .ok_or_else(|| Error::Config(format!("flux spec `{spec}`: missing parameter")))?;
    let p: f64 = p
        .parse()
        .map_err(|_| Error::Config(format!("flux spec `{spec}`: bad parameter")))?;
    match name {
        "linear" => Ok(FluxFn::Linear { a: c::<S>(p) }),
        "burgers" => {
            if p <= 0.0 {
                return Err(Error::Config("burgers flux needs u_max > 0".into()));
            }
            Ok(FluxFn::BurgersClipped { u_max: c::<S>(p) })
        }
        "sin" => Ok(FluxFn::SmoothSin { a: c::<S>(p) }),
        _ => Err(Error::Config(format!("unknown flux family `{name}`"))),
    }
}

pub fn flux_key<S: Scalar>(f: &FluxFn<S>) -> String {
    match *f {
        FluxFn::Linear { a } => format!("linear:{a}"),
        FluxFn::BurgersClipped { u_max } => format!("burgers:{u_max}"),
        FluxFn::SmoothSin { a } => format!("sin:{a}"),
    }
}

/// Conservative Lax-Friedrichs flux divergence `D_j = (F_{j+1/2} - F_{j-1/2}) / dx`
/// with `F_{j+1/2} = (f(u_j) + f(u_{j+1}))/2 - (a/2)(u_{j+1} - u_j)` and the
/// dissipation coefficient `a = |f|_Lip`.
pub fn llf_divergence<S: Scalar>(flux: &FluxFn<S>, u: &[S], dx: S, out: &mut [S]) {
    let n = u.len();
    let a = flux.lip();
    let half = c::<S>(0.5);
    let mut f_prev = {
        // interface (n-1, 0)
        let (ul, ur) = (u[n - 1], u[0]);
        half * (flux.value(ul) + flux.value(ur)) - half * a * (ur - ul)
    };
    for j in 0..n {
        let (ul, ur) = (u[j], u[(j + 1) % n]);
        let f_next = half * (flux.value(ul) + flux.value(ur)) - half * a * (ur - ul);
        out[j] = (f_next - f_prev) / dx;
        f_prev = f_next;
    }
}

/// Exact linearisation of [`llf_divergence`] around the base state `u`,
/// applied to the perturbation `w`.
pub fn llf_divergence_linearized<S: Scalar>(
    flux: &FluxFn<S>,
    u: &[S],
    w: &[S],
    dx: S,
    out: &mut [S],
) {
    let n = u.len();
    let a = flux.lip();
    let half = c::<S>(0.5);
    let lin_face = |j: usize| {
        let jn = (j + 1) % n;
        half * (flux.deriv(u[j]) * w[j] + flux.deriv(u[jn]) * w[jn]) - half * a * (w[jn] - w[j])
    };
    let mut f_prev = lin_face(n - 1);
    for j in 0..n {
        let f_next = lin_face(j);
        out[j] = (f_next - f_prev) / dx;
        f_prev = f_next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fluxes_vanish_at_zero() {
        for f in [
            FluxFn::<f64>::Linear { a: 1.5 },
            FluxFn::BurgersClipped { u_max: 2.0 },
            FluxFn::SmoothSin { a: 0.7 },
        ] {
            assert_eq!(f.value(0.0), 0.0);
        }
    }

    #[test]
    fn burgers_clipping_is_c1() {
        let f = FluxFn::<f64>::BurgersClipped { u_max: 2.0 };
        let h = 1e-7;
        for &u in &[-3.0, -2.0, -0.5, 1.9999, 2.0, 2.5] {
            let fd = (f.value(u + h) - f.value(u - h)) / (2.0 * h);
            assert_relative_eq!(f.deriv(u), fd, epsilon = 1e-5);
            assert!(f.deriv(u).abs() <= f.lip() + 1e-12);
        }
        // matches plain Burgers inside the clip
        assert_relative_eq!(f.value(1.5), 1.125);
        // linear growth outside
        assert_relative_eq!(f.value(3.0), 2.0 * 3.0 - 2.0);
    }

    #[test]
    fn lipschitz_sweep() {
        let f = FluxFn::<f64>::SmoothSin { a: 0.8 };
        for i in 0..200 {
            let u = -10.0 + i as f64 * 0.1;
            assert!(f.deriv(u).abs() <= f.lip() + 1e-12);
        }
    }

    #[test]
    fn divergence_is_conservative() {
        let f = FluxFn::<f64>::BurgersClipped { u_max: 2.0 };
        let u: Vec<f64> = (0..64).map(|j| (j as f64 / 10.0).sin()).collect();
        let mut d = vec![0.0; 64];
        llf_divergence(&f, &u, 0.1, &mut d);
        let total: f64 = d.iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let f = FluxFn::<f64>::SmoothSin { a: 1.1 };
        let n = 32;
        let u: Vec<f64> = (0..n).map(|j| (j as f64 / 5.0).cos()).collect();
        let w: Vec<f64> = (0..n).map(|j| (j as f64 / 7.0).sin()).collect();
        let h = 1e-7;
        let up: Vec<f64> = u.iter().zip(&w).map(|(&a, &b)| a + h * b).collect();
        let um: Vec<f64> = u.iter().zip(&w).map(|(&a, &b)| a - h * b).collect();
        let (mut dp, mut dm, mut dl) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        llf_divergence(&f, &up, 0.1, &mut dp);
        llf_divergence(&f, &um, 0.1, &mut dm);
        llf_divergence_linearized(&f, &u, &w, 0.1, &mut dl);
        for j in 0..n {
            let fd = (dp[j] - dm[j]) / (2.0 * h);
            assert_relative_eq!(dl[j], fd, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn parse_round_trip() {
        for spec in ["linear:1", "burgers:2", "sin:0.5"] {
            let f = parse_flux::<f64>(spec).unwrap();
            assert_eq!(flux_key(&f), spec);
        }
        assert!(parse_flux::<f64>("cubic:1").is_err());
    }
}
