// SPDX-License-Identifier: Apache-2.0

//! How evenly a set of lexical vectors spreads its mass over the
//! vocabulary. A token that lights up for most samples regardless of
//! content shows up as a large normalized column mean.

use crate::error::{Error, Result};
use crate::lexcore::DenseLexical;

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    /// Column means divided by their sum.
    pub normalized_means: Vec<f64>,
    pub max_normalized: f64,
    pub gini: f64,
    /// Per token: fraction of vectors whose value exceeds `1/√V`.
    pub activation_freq: Vec<f64>,
    /// Mean count of entries above `1/√V` per vector.
    pub activated_mean: f64,
}

impl ColumnStats {
    pub fn new(vectors: &[DenseLexical]) -> Result<Self> {
        let first = vectors.first().ok_or_else(|| Error::invalid("no vectors to summarize"))?;
        let v = first.vocab_size();
        let threshold = 1.0 / (v as f64).sqrt();
        let mut sums = vec![0.0; v];
        let mut counts = vec![0usize; v];
        for s in vectors {
            if s.vocab_size() != v {
                return Err(Error::DimensionMismatch {
                    context: "column statistics vocabulary",
                    expected: v,
                    got: s.vocab_size(),
                });
            }
            for (j, &x) in s.values().iter().enumerate() {
                sums[j] += x;
                if x > threshold {
                    counts[j] += 1;
                }
            }
        }
        let total: f64 = sums.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroVector);
        }
        let normalized_means: Vec<f64> = sums.iter().map(|s| s / total).collect();
        let n = vectors.len() as f64;
        Ok(Self {
            max_normalized: normalized_means.iter().copied().fold(0.0, f64::max),
            gini: gini(&normalized_means),
            activation_freq: counts.iter().map(|&c| c as f64 / n).collect(),
            activated_mean: counts.iter().sum::<usize>() as f64 / n,
            normalized_means,
        })
    }

    /// The `n` tokens with the largest normalized column mean, ties by id.
    pub fn top_overused(&self, n: usize) -> Vec<(u32, f64)> {
        let mut order: Vec<(u32, f64)> = self
            .normalized_means
            .iter()
            .enumerate()
            .map(|(j, &m)| (j as u32, m))
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        order.truncate(n);
        order
    }
}

/// Gini coefficient of non-negative values: 0 when all equal, approaching
/// 1 when one value holds all the mass.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i + 1) as f64 - n as f64 - 1.0) * x)
        .sum();
    weighted / (n as f64 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise_gini(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let total: f64 = v.iter().sum();
        let mut acc = 0.0;
        for a in v {
            for b in v {
                acc += (a - b).abs();
            }
        }
        acc / (2.0 * n * total)
    }

    #[test]
    fn gini_extremes() {
        assert_eq!(gini(&[0.25; 4]), 0.0);
        assert!((gini(&[0.0, 0.0, 0.0, 1.0]) - 0.75).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn gini_matches_pairwise_definition(v in prop::collection::vec(0.0f64..10.0, 1..40)) {
            prop_assume!(v.iter().sum::<f64>() > 1e-6);
            prop_assert!((gini(&v) - pairwise_gini(&v)).abs() < 1e-12);
        }
    }

    #[test]
    fn column_stats_on_a_hand_example() {
        let a = DenseLexical::normalize(&[3.0, 4.0, 0.0, 0.0]).unwrap();
        let b = DenseLexical::normalize(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        let s = ColumnStats::new(&[a, b]).unwrap();
        // Column sums 0.6, 1.8, 0, 0 of 2.4.
        assert!((s.normalized_means[0] - 0.25).abs() < 1e-15);
        assert!((s.max_normalized - 0.75).abs() < 1e-15);
        assert_eq!(s.activation_freq, vec![0.5, 1.0, 0.0, 0.0]);
        assert_eq!(s.activated_mean, 1.5);
        assert_eq!(s.top_overused(2), vec![(1, 0.75), (0, 0.25)]);
        assert!(ColumnStats::new(&[]).is_err());
    }
}
