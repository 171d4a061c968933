// SPDX-License-Identifier: Apache-2.0

//! Sparse lexical vectors and the pruning rules that produce them.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexcore::DenseLexical;

/// Sorted `(token id, value)` pairs with strictly positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLexical {
    vocab_size: usize,
    entries: Vec<(u32, f64)>,
}

impl SparseLexical {
    pub fn new(vocab_size: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::invalid(format!(
                    "sparse token ids not strictly increasing at {}",
                    w[1].0
                )));
            }
        }
        for &(tok, val) in &entries {
            if tok as usize >= vocab_size {
                return Err(Error::invalid(format!(
                    "token {tok} outside vocabulary of size {vocab_size}"
                )));
            }
            if !(val > 0.0 && val.is_finite()) {
                return Err(Error::invalid(format!("sparse value {val} must be positive")));
            }
        }
        Ok(Self {
            vocab_size,
            entries,
        })
    }

    pub fn empty(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            entries: Vec::new(),
        }
    }

    /// Keeps the strictly positive entries of a dense vector.
    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        Self {
            vocab_size: values.len(),
            entries,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        for &(tok, val) in &self.entries {
            out[tok as usize] = val;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.vocab_size,
            self.entries.iter().map(|&(t, v)| (t, v * factor)).collect(),
        )
    }
}

/// Keeps entries strictly greater than `1/√V`, values unchanged.
pub fn sparsify_value(s: &DenseLexical) -> SparseLexical {
    let threshold = 1.0 / (s.vocab_size() as f64).sqrt();
    let entries = s
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, &v)| (i as u32, v))
        .collect();
    SparseLexical {
        vocab_size: s.vocab_size(),
        entries,
    }
}

fn top_k_entries(values: &[f64], k: usize) -> Vec<(u32, f64)> {
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_by(|&a, &b| {
        values[b as usize]
            .partial_cmp(&values[a as usize])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<(u32, f64)> = order
        .into_iter()
        .take(k)
        .map(|i| (i, values[i as usize]))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    kept.sort_by_key(|&(i, _)| i);
    kept
}

/// The `k` largest entries; ties go to the lower token id, zeros are dropped.
pub fn sparsify_topk(s: &DenseLexical, k: usize) -> Result<SparseLexical> {
    if k == 0 || k > s.vocab_size() {
        return Err(Error::invalid(format!(
            "top-k needs 1 ≤ k ≤ {}, got {k}",
            s.vocab_size()
        )));
    }
    Ok(SparseLexical {
        vocab_size: s.vocab_size(),
        entries: top_k_entries(s.values(), k),
    })
}

/// Number of entries kept when pruning a length-`vocab_size` vector to at
/// least `ratio` zeros. Always keeps at least one entry.
pub fn kept_count(vocab_size: usize, ratio: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::invalid(format!(
            "sparsity ratio must be in [0, 1), got {ratio}"
        )));
    }
    // The slack absorbs products like (1 - 0.9) * 10 = 0.9999999999999998.
    let keep = ((1.0 - ratio) * vocab_size as f64 + 1e-9).floor() as usize;
    Ok(keep.clamp(1, vocab_size))
}

/// Top-k pruning where k is derived from a target sparsity ratio.
pub fn prune_to_sparsity(s: &DenseLexical, ratio: f64) -> Result<SparseLexical> {
    sparsify_topk(s, kept_count(s.vocab_size(), ratio)?)
}

/// Merge-join dot product over the shared token ids.
pub fn sparse_dot(a: &SparseLexical, b: &SparseLexical) -> f64 {
    debug_assert_eq!(a.vocab_size, b.vocab_size);
    let (mut i, mut j) = (0, 0);
    let (ea, eb) = (&a.entries, &b.entries);
    let mut acc = 0.0;
    while i < ea.len() && j < eb.len() {
        match ea[i].0.cmp(&eb[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                acc += ea[i].1 * eb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

/// One line of a sparse-vector JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRecord {
    pub id: u64,
    pub entries: Vec<(u32, f64)>,
}

pub fn write_sparse_jsonl<'a>(
    path: &Path,
    records: impl IntoIterator<Item = (u64, &'a SparseLexical)>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (id, s) in records {
        let rec = SparseRecord {
            id,
            entries: s.entries.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sparse_jsonl(path: &Path, vocab_size: usize) -> Result<Vec<(u64, SparseLexical)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SparseRecord = serde_json::from_str(&line)?;
        out.push((rec.id, SparseLexical::new(vocab_size, rec.entries)?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(values: &[f64]) -> DenseLexical {
        DenseLexical::normalize(values).unwrap()
    }

    // The example vectors are not unit norm; thresholds only look at values.
    fn raw(values: &[f64]) -> DenseLexical {
        DenseLexical(values.to_vec())
    }

    fn random_sparse(rng: &mut ChaCha8Rng, v: usize) -> SparseLexical {
        let dense: Vec<f64> = (0..v)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    rng.gen_range(0.01..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        SparseLexical::from_dense(&dense)
    }

    #[test]
    fn value_threshold_examples() {
        let s = sparsify_value(&raw(&[0.6, 0.3, 0.8, 0.1]));
        assert_eq!(s.entries(), &[(0, 0.6), (2, 0.8)]);

        let u = 1.0 / 4f64.sqrt();
        assert!(sparsify_value(&raw(&[u; 4])).is_empty());

        let one_hot = sparsify_value(&unit(&[0.0, 0.0, 1.0]));
        assert_eq!(one_hot.entries(), &[(2, 1.0)]);
    }

    #[test]
    fn topk_examples() {
        let s = raw(&[0.6, 0.3, 0.8, 0.1]);
        assert_eq!(sparsify_topk(&s, 1).unwrap().entries(), &[(2, 0.8)]);
        assert_eq!(sparsify_topk(&s, 4).unwrap().nnz(), 4);

        let tie = raw(&[0.5, 0.5, 0.5, 0.0]);
        assert_eq!(
            sparsify_topk(&tie, 2).unwrap().entries(),
            &[(0, 0.5), (1, 0.5)]
        );
        // Zeros are dropped even inside the top k.
        assert_eq!(sparsify_topk(&tie, 4).unwrap().nnz(), 3);

        assert!(sparsify_topk(&s, 0).is_err());
        assert!(sparsify_topk(&s, 5).is_err());
    }

    #[test]
    fn sparsity_pruning_examples() {
        let s = raw(&[0.6, 0.3, 0.8, 0.1]);
        assert_eq!(prune_to_sparsity(&s, 0.0).unwrap().nnz(), 4);
        assert_eq!(
            prune_to_sparsity(&s, 0.5).unwrap().entries(),
            &[(0, 0.6), (2, 0.8)]
        );
        assert_eq!(kept_count(17149, 0.9827).unwrap(), 296);
        assert_eq!(kept_count(10, 0.9).unwrap(), 1);
        assert_eq!(kept_count(256, 0.999).unwrap(), 1);
        assert!(prune_to_sparsity(&s, 1.0).is_err());
        assert!(prune_to_sparsity(&s, -0.1).is_err());
    }

    #[test]
    fn sparse_dot_examples() {
        let a = SparseLexical::new(4, vec![(0, 0.5), (3, 0.5)]).unwrap();
        let b = SparseLexical::new(4, vec![(3, 1.0)]).unwrap();
        assert_eq!(sparse_dot(&a, &b), 0.5);
        let c = SparseLexical::new(4, vec![(1, 1.0)]).unwrap();
        assert_eq!(sparse_dot(&a, &c), 0.0);
    }

    #[test]
    fn sparse_dot_equals_dense_dot() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let a = random_sparse(&mut rng, 64);
            let b = random_sparse(&mut rng, 64);
            let dense = crate::linalg::dot(&a.densify(), &b.densify());
            let sparse = sparse_dot(&a, &b);
            assert!((sparse - dense).abs() <= 1e-12 * dense.abs().max(1.0));
        }
    }

    #[test]
    fn constructor_validates() {
        assert!(SparseLexical::new(4, vec![(2, 0.1), (1, 0.2)]).is_err());
        assert!(SparseLexical::new(4, vec![(1, 0.1), (1, 0.2)]).is_err());
        assert!(SparseLexical::new(4, vec![(4, 0.1)]).is_err());
        assert!(SparseLexical::new(4, vec![(0, 0.0)]).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vecs.jsonl");
        let a = SparseLexical::new(5, vec![(0, 0.25), (4, 0.75)]).unwrap();
        let b = SparseLexical::empty(5);
        write_sparse_jsonl(&path, [(7, &a), (9, &b)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"id":7,"entries":[[0,0.25],[4,0.75]]}"#);
        let back = read_sparse_jsonl(&path, 5).unwrap();
        assert_eq!(back, vec![(7, a), (9, b)]);
    }

    proptest! {
        #[test]
        fn topk_full_reproduces_support(values in proptest::collection::vec(0.0f64..1.0, 2..40)) {
            prop_assume!(values.iter().any(|&v| v > 0.0));
            let s = unit(&values);
            let sparse = sparsify_topk(&s, s.vocab_size()).unwrap();
            let dense = sparse.densify();
            for (i, &v) in s.values().iter().enumerate() {
                prop_assert_eq!(dense[i], v);
            }
        }

        #[test]
        fn ranking_is_invariant_to_query_scale(
            seed in 0u64..1000,
            factor in 0.01f64..100.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let query = random_sparse(&mut rng, 32);
            let corpus: Vec<_> = (0..20).map(|_| random_sparse(&mut rng, 32)).collect();
            let rank = |q: &SparseLexical| {
                let mut idx: Vec<usize> = (0..corpus.len()).collect();
                let scores: Vec<f64> = corpus.iter().map(|d| sparse_dot(q, d)).collect();
                idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
                idx
            };
            prop_assert_eq!(rank(&query), rank(&query.scaled(factor).unwrap()));
        }
    }
}
