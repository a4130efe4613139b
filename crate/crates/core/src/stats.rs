//! Order-insensitive reductions and small-sample statistics for the Monte
//! Carlo estimators.

use crate::scalar::{c, cu, Scalar};

/// Pairwise (cascade) summation.
///
/// Deterministic for a fixed input order and far more accurate than a naive
/// left fold; every reduction in the crate funnels through this so results
/// do not depend on worker count.
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    match values.len() {
        0 => S::zero(),
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sample mean with a symmetric normal-approximation confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi<S> {
    pub mean: S,
    /// Standard error of the mean.
    pub se: S,
    pub ci_lo: S,
    pub ci_hi: S,
    pub n: usize,
}

/// Critical value for the 95% two-sided normal interval.
pub const Z95: f64 = 1.959963984540054;

pub fn mean_ci<S: Scalar>(samples: &[S], z: S) -> MeanCi<S> {
    let n = samples.len();
    assert!(n > 0, "mean of empty sample");
    let mean = pairwise_sum(samples) / cu::<S>(n);
    if n == 1 {
        return MeanCi { mean, se: S::zero(), ci_lo: mean, ci_hi: mean, n };
    }
    let sq: Vec<S> = samples.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / cu::<S>(n - 1);
    let se = (var / cu::<S>(n)).sqrt();
    MeanCi { mean, se, ci_lo: mean - z * se, ci_hi: mean + z * se, n }
}

pub fn mean_ci95<S: Scalar>(samples: &[S]) -> MeanCi<S> {
    mean_ci(samples, c::<S>(Z95))
}

impl<S: Scalar> MeanCi<S> {
    pub fn overlaps(&self, other: &MeanCi<S>) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

pub fn sample_variance<S: Scalar>(samples: &[S]) -> S {
    let n = samples.len();
    assert!(n > 1);
    let mean = pairwise_sum(samples) / cu::<S>(n);
    let sq: Vec<S> = samples.iter().map(|&x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&sq) / cu::<S>(n - 1)
}

pub fn correlation<S: Scalar>(a: &[S], b: &[S]) -> S {
    assert_eq!(a.len(), b.len());
    let n = cu::<S>(a.len());
    let ma = pairwise_sum(a) / n;
    let mb = pairwise_sum(b) / n;
    let cov: Vec<S> = a.iter().zip(b).map(|(&x, &y)| (x - ma) * (y - mb)).collect();
    let va: Vec<S> = a.iter().map(|&x| (x - ma) * (x - ma)).collect();
    let vb: Vec<S> = b.iter().map(|&y| (y - mb) * (y - mb)).collect();
    pairwise_sum(&cov) / (pairwise_sum(&va) * pairwise_sum(&vb)).sqrt()
}

/// Ordinary least squares for `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy)]
pub struct LineFit<S> {
    pub slope: S,
    pub intercept: S,
    pub slope_se: S,
    pub r2: S,
}

pub fn fit_line<S: Scalar>(x: &[S], y: &[S]) -> LineFit<S> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 2);
    let nn = cu::<S>(n);
    let mx = pairwise_sum(x) / nn;
    let my = pairwise_sum(y) / nn;
    let sxx: Vec<S> = x.iter().map(|&v| (v - mx) * (v - mx)).collect();
    let sxy: Vec<S> = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).collect();
    let sxx = pairwise_sum(&sxx);
    let sxy = pairwise_sum(&sxy);
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: Vec<S> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .collect();
    let ss_res = pairwise_sum(&resid);
    let syy: Vec<S> = y.iter().map(|&v| (v - my) * (v - my)).collect();
    let ss_tot = pairwise_sum(&syy);
    let dof = if n > 2 { cu::<S>(n - 2) } else { S::one() };
    let slope_se = (ss_res / dof / sxx).sqrt();
    let r2 = if ss_tot > S::zero() { S::one() - ss_res / ss_tot } else { S::one() };
    LineFit { slope, intercept, slope_se, r2 }
}

/// Least squares for `y = a * x1 + b * x2` (no intercept), with the standard
/// error of `b` from the residual variance.
pub fn fit_two_regressors<S: Scalar>(x1: &[S], x2: &[S], y: &[S]) -> (S, S, S) {
    let n = y.len();
    assert!(n >= 3 && x1.len() == n && x2.len() == n);
    let s11 = pairwise_sum(&x1.iter().map(|&v| v * v).collect::<Vec<_>>());
    let s22 = pairwise_sum(&x2.iter().map(|&v| v * v).collect::<Vec<_>>());
    let s12 = pairwise_sum(&x1.iter().zip(x2).map(|(&a, &b)| a * b).collect::<Vec<_>>());
    let s1y = pairwise_sum(&x1.iter().zip(y).map(|(&a, &b)| a * b).collect::<Vec<_>>());
    let s2y = pairwise_sum(&x2.iter().zip(y).map(|(&a, &b)| a * b).collect::<Vec<_>>());
    let det = s11 * s22 - s12 * s12;
    let a = (s22 * s1y - s12 * s2y) / det;
    let b = (s11 * s2y - s12 * s1y) / det;
    let resid: Vec<S> = (0..n)
        .map(|i| {
            let r = y[i] - a * x1[i] - b * x2[i];
            r * r
        })
        .collect();
    let sigma2 = pairwise_sum(&resid) / cu::<S>(n - 2);
    let b_se = (sigma2 * s11 / det).sqrt();
    (a, b, b_se)
}
