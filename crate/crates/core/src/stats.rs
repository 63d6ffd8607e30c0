//! Empirical distributions.

use crate::{Error, Result};

/// Empirical CDF of a set of non-negative error samples.
///
/// `values` is sorted ascending and `probabilities[i] = (i + 1) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCdf {
    pub values: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ErrorCdf {
    pub fn from_samples<I: IntoIterator<Item = f64>>(samples: I) -> Result<Self> {
        let mut values: Vec<f64> = samples.into_iter().collect();
        if values.is_empty() {
            return Err(Error::config("empirical CDF needs at least one sample"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(format!("non-finite sample {bad} in CDF input")));
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let probabilities = (1..=values.len()).map(|i| i as f64 / n).collect();
        Ok(Self { values, probabilities })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `P(e <= x)`.
    pub fn prob_le(&self, x: f64) -> f64 {
        let k = self.values.partition_point(|&v| v <= x);
        k as f64 / self.values.len() as f64
    }

    /// Smallest sample `e` with `P(e' <= e) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let rank = (p.clamp(0.0, 1.0) * n as f64).ceil() as usize;
        self.values[rank.clamp(1, n) - 1]
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// First-order stochastic dominance: `self` puts at least as much mass
    /// below every threshold as `other` does (small errors are better).
    pub fn dominates(&self, other: &ErrorCdf) -> bool {
        self.values
            .iter()
            .chain(other.values.iter())
            .all(|&x| self.prob_le(x) >= other.prob_le(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn order_statistics() {
        let cdf = ErrorCdf::from_samples([0.4, 0.1, 0.3, 0.2]).unwrap();
        assert_eq!(cdf.prob_le(0.25), 0.5);
        assert_eq!(cdf.quantile(0.5), 0.2);
        assert_eq!(cdf.quantile(0.9), 0.4);
        assert_eq!(*cdf.probabilities.last().unwrap(), 1.0);
    }

    #[test]
    fn zero_errors_step_at_zero() {
        let cdf = ErrorCdf::from_samples(vec![0.0; 10]).unwrap();
        assert_eq!(cdf.prob_le(0.0), 1.0);
        assert_eq!(cdf.prob_le(-1e-12), 0.0);
    }

    #[test]
    fn empty_is_error() {
        assert!(ErrorCdf::from_samples(Vec::<f64>::new()).is_err());
        assert!(ErrorCdf::from_samples([1.0, f64::NAN]).is_err());
    }

    #[test]
    fn shifted_samples_are_dominated() {
        let a = ErrorCdf::from_samples([0.1, 0.2, 0.3]).unwrap();
        let b = ErrorCdf::from_samples([0.2, 0.3, 0.4]).unwrap();
        assert!(a.dominates(&b));
        assert!(!b.dominates(&a));
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut xs in prop::collection::vec(0.0f64..100.0, 1..64), seed in any::<u64>()) {
            let a = ErrorCdf::from_samples(xs.clone()).unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..xs.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = ErrorCdf::from_samples(xs).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn monotone_fields(xs in prop::collection::vec(0.0f64..10.0, 1..64)) {
            let c = ErrorCdf::from_samples(xs).unwrap();
            prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.probabilities.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(*c.probabilities.last().unwrap(), 1.0);
        }
    }
}
