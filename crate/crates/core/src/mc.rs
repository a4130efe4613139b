//! Deterministic Monte Carlo fan-out.
//!
//! Samples are indexed; each index derives its own noise stream, results are
//! collected in index order and reduced with pairwise summation, so reported
//! numbers do not depend on the worker count or schedule.

use rayon::prelude::*;

/// Map `f` over sample indices in parallel, preserving order.
pub fn run_samples<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Fallible variant; the first error (by index) wins.
pub fn try_run_samples<T: Send>(
    n: usize,
    f: impl Fn(usize) -> crate::Result<T> + Sync + Send,
) -> crate::Result<Vec<T>> {
    let results: Vec<crate::Result<T>> = (0..n).into_par_iter().map(f).collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = run_samples(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn errors_propagate() {
        let r = try_run_samples(10, |i| {
            if i == 5 {
                Err(crate::Error::InvalidInput("boom".into()))
            } else {
                Ok(i)
            }
        });
        assert!(r.is_err());
    }
}
