//! Tolerance budgets for the inequality checks.
//!
//! Every discrete check of a continuum inequality carries an explicit error
//! budget instead of an ad-hoc epsilon. The generic shape is
//!
//! ```text
//! tol = c1 * dx + c2 * dt + 3 * SE + c3 * eps
//! ```
//!
//! with the constants calibrated once on the linear-flux reference case and
//! frozen here. A check never tightens or loosens its budget at run time.

/// Relative tolerance for identities that are exact in real arithmetic
/// (homogeneity, determinism, superposition).
pub const EXACT_REL: f64 = 1e-12;

/// Mollifier masses under the module quadrature rule.
pub const MOLLIFIER_MASS_ABS: f64 = 1e-10;

/// Dual-quadrature agreement for the kernel constants `c_d`.
pub const CONSTANT_QUAD_ABS: f64 = 1e-8;

/// Relative slack for the weighted Young/heat-kernel inequalities; covers
/// trapezoid quadrature of the weighted norms.
pub const KERNEL_INEQ_REL: f64 = 1e-6;

/// Relative L2 tolerance for the heat semigroup composition property.
pub const SEMIGROUP_REL: f64 = 1e-10;

/// Floating-point noise floor allowed below zero for positivity checks.
pub const POSITIVITY_ABS: f64 = 1e-14;

/// Mass conservation per unit time, relative.
pub const CONSERVATION_REL: f64 = 1e-10;

/// Relative L2(phi) discrepancy allowed between the tangent solver and the
/// finite-difference (shifted-path) oracle at the reference grid.
pub const TANGENT_ORACLE_REL: f64 = 0.05;

/// Entropy-inequality budget `c1 dx + c2 dt + 3 SE + c3 eps`.
///
/// Calibrated on the linear-flux/additive-noise reference configuration
/// (worst observed deficit across 200 random draws was covered with a
/// factor >= 4 margin by these values).
pub mod entropy_residual {
    pub const C1_DX: f64 = 0.02;
    pub const C2_DT: f64 = 2.0;
    pub const C3_EPS: f64 = 0.02;
}

/// Contraction-curve budget `c1 dx + c2 sqrt(dt) t + 3 SE`; the dx term
/// covers the Lax-Friedrichs transport error of the initial data, the
/// sqrt(dt) t term the accumulated weak error of the Ito correction.
pub mod contraction {
    pub const C1_DX: f64 = 0.02;
    pub const C2_SQRT_DT_T: f64 = 0.5;
    /// Per-unit-time slack for the deterministic (sigma = 0) strict check.
    pub const DETERMINISTIC_REL: f64 = 1e-10;
}

/// Kato-inequality budget `c1 dx + c2 dt + 3 SE + c3 (eps + eps')`.
pub mod kato {
    pub const C1_DX: f64 = 0.1;
    pub const C2_DT: f64 = 2.0;
    pub const C3_EPS: f64 = 0.6;
}

/// Doubling-of-variables budget for `L >= R + F + T1 + T2 + T3 - tol`.
pub mod doubling {
    pub const C1_DX: f64 = 0.5;
    pub const C2_DT: f64 = 5.0;
    pub const C3_EPS: f64 = 1.0;
}

/// Fractional-BV modulus check: `eta(T) <= C eta(0) + C' r^kappa + 3 SE`,
/// with `C` the Gronwall constant from the flux transport and `C'` fitted
/// once on the spatially modulated reference configuration and frozen.
pub mod frac_bv {
    pub const C_PRIME: f64 = 1.0;
}

/// Picard iteration: required geometric decay ratio above the computed
/// threshold beta.
pub const PICARD_RATIO: f64 = 0.9;

/// Slope tolerances for order fits (weak order of the Ito verifier, the
/// epsilon-rate of the Cauchy study, the doubling T1 envelope).
pub const SLOPE_TOL: f64 = 0.3;

/// Minimum R^2 for the `T3 = O(eps)` linearity fit.
pub const T3_R2_MIN: f64 = 0.9;
