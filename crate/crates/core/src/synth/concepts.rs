// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::lexcore::SparseLexical;
use crate::synth::{stream_rng, STREAM_CONCEPTS};

/// Ground-truth lexical content of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub id: u64,
    pub true_lexical: SparseLexical,
}

/// Number of distinct supports of size 1..=max_active over `vocab_size`
/// tokens, saturating at `u128::MAX`.
pub fn support_capacity(vocab_size: usize, max_active: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for k in 1..=max_active.min(vocab_size) {
        binom = binom
            .saturating_mul((vocab_size - k + 1) as u128)
            / k as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Concepts with distinct random supports of 1..=`max_active` tokens and
/// positive unit-norm values.
pub fn gen_concepts(
    vocab_size: usize,
    n_concepts: usize,
    max_active: usize,
    seed: u64,
) -> Result<Vec<Concept>> {
    if max_active == 0 || max_active >= vocab_size {
        return Err(Error::invalid(format!(
            "max_active must be in [1, {vocab_size}), got {max_active}"
        )));
    }
    if (n_concepts as u128) > support_capacity(vocab_size, max_active) {
        return Err(Error::invalid(format!(
            "{n_concepts} concepts exceed the {} distinct supports available",
            support_capacity(vocab_size, max_active)
        )));
    }
    let mut rng = stream_rng(seed, STREAM_CONCEPTS);
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(n_concepts);
    let mut out = Vec::with_capacity(n_concepts);
    let max_attempts = 1000 * n_concepts.max(1);
    let mut attempts = 0;
    while out.len() < n_concepts {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(
                "could not sample enough distinct concept supports",
            ));
        }
        let k = rng.gen_range(1..=max_active);
        let mut support: Vec<u32> = sample(&mut rng, vocab_size, k)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        support.sort_unstable();
        let values: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..1.5)).collect();
        if !seen.insert(support.clone()) {
            continue;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let entries = support
            .into_iter()
            .zip(values)
            .map(|(t, v)| (t, v / norm))
            .collect();
        out.push(Concept {
            id: out.len() as u64,
            true_lexical: SparseLexical::new(vocab_size, entries)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let a = gen_concepts(64, 20, 4, 5).unwrap();
        let b = gen_concepts(64, 20, 4, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_concepts(64, 20, 4, 6).unwrap());
    }

    #[test]
    fn single_token_concepts_are_one_hot() {
        for c in gen_concepts(16, 10, 1, 0).unwrap() {
            assert_eq!(c.true_lexical.nnz(), 1);
            assert!((c.true_lexical.entries()[0].1 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn supports_are_valid_and_distinct() {
        let concepts = gen_concepts(64, 32, 4, 9).unwrap();
        let mut supports = HashSet::new();
        for c in &concepts {
            let e = c.true_lexical.entries();
            assert!((1..=4).contains(&e.len()));
            assert!(e.windows(2).all(|w| w[0].0 < w[1].0));
            assert!(e.iter().all(|&(t, v)| t < 64 && v > 0.0));
            let norm: f64 = e.iter().map(|(_, v)| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
            assert!(supports.insert(e.iter().map(|p| p.0).collect::<Vec<_>>()));
        }
    }

    #[test]
    fn capacity_limits() {
        assert_eq!(support_capacity(4, 2), 4 + 6);
        assert!(gen_concepts(4, 11, 2, 0).is_err());
        assert_eq!(gen_concepts(4, 10, 2, 0).unwrap().len(), 10);
        assert!(gen_concepts(4, 1, 4, 0).is_err());
        assert!(gen_concepts(4, 1, 0, 0).is_err());
    }
}
