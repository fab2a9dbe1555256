//! Sample summaries and monotone smoothing.

use alloc::vec::Vec;

use crate::math::{sqrt, CompensatedSum};

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and `std / sqrt(n)` of `values`, summed in index order.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mut sum = CompensatedSum::default();
        for &v in values {
            sum.add(v);
        }
        let mean = sum.value() / n as f64;
        if n < 2 {
            return Self {
                mean,
                stderr: 0.0,
                n,
            };
        }
        let mut ss = CompensatedSum::default();
        for &v in values {
            ss.add((v - mean) * (v - mean));
        }
        let var = ss.value() / (n - 1) as f64;
        Self {
            mean,
            stderr: sqrt(var / n as f64),
            n,
        }
    }

    /// `wa * a + wb * b` for independent estimates.
    pub fn weighted(a: Estimate, wa: f64, b: Estimate, wb: f64) -> Self {
        Self {
            mean: wa * a.mean + wb * b.mean,
            stderr: sqrt(wa * wa * a.stderr * a.stderr + wb * wb * b.stderr * b.stderr),
            n: a.n + b.n,
        }
    }
}

/// Combined standard error of the difference of two independent estimates.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    sqrt(a * a + b * b)
}

/// Least-squares non-decreasing fit (pool adjacent violators), unit weights.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 > s2 / c2 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s1 + s2, c1 + c2);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(values.len());
    for (s, c) in blocks {
        let m = s / c as f64;
        out.extend(core::iter::repeat_n(m, c));
    }
    out
}

/// Empirical Wasserstein-1 distance between two equal-size 1D samples.
pub fn wasserstein1_equal(a: &mut [f64], b: &mut [f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut acc = CompensatedSum::default();
    for (x, y) in a.iter().zip(b.iter()) {
        acc.add((x - y).abs());
    }
    acc.value() / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn estimate_of_known_sample() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, stderr sqrt(5/12)
        assert!((e.stderr - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(
            isotonic_increasing(&[1.0, 3.0, 2.0, 4.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn wasserstein_of_shift() {
        let mut a = vec![0.0, 1.0, 2.0];
        let mut b = vec![2.5, 0.5, 1.5];
        assert!((wasserstein1_equal(&mut a, &mut b) - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn isotonic_is_monotone_and_mean_preserving(v in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let fit = isotonic_increasing(&v);
            prop_assert_eq!(fit.len(), v.len());
            for w in fit.windows(2) {
                prop_assert!(w[0] <= w[1] + 1e-12);
            }
            let s1: f64 = v.iter().sum();
            let s2: f64 = fit.iter().sum();
            prop_assert!((s1 - s2).abs() < 1e-9);
        }
    }
}
