// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexcore::{FeatureSequence, SparseLexical};
use crate::linalg::Mat;
use crate::synth::{Concept, ModalityMaps};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split {other:?}"))),
        }
    }
}

/// An image/text pair generated from one concept.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub id: u64,
    pub split: Split,
    pub concept_id: u64,
    pub true_lexical: SparseLexical,
    /// g×g patches, row-major.
    pub img_features: FeatureSequence,
    pub txt_features: FeatureSequence,
    /// Tokens whose signal was written into each patch; empty for background.
    pub ownership: Vec<Vec<u32>>,
}

fn gaussian(rng: &mut impl Rng, sigma: f64, len: usize) -> Result<Vec<f64>> {
    if sigma == 0.0 {
        return Ok(vec![0.0; len]);
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::invalid(format!("noise sigma {sigma}: {e}")))?;
    Ok((0..len).map(|_| normal.sample(rng)).collect())
}

/// Renders `concept` through both modality maps. Its tokens are dealt
/// round-robin onto a random subset of `min(k, g²)` patches.
pub fn gen_pair(
    concept: &Concept,
    noise_sigma: f64,
    maps: &ModalityMaps,
    grid: usize,
    rng: &mut impl Rng,
) -> Result<PairedSample> {
    if grid == 0 {
        return Err(Error::invalid("patch grid must be at least 1×1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid(format!("noise sigma must be ≥ 0, got {noise_sigma}")));
    }
    let vocab = maps.vocab_size();
    if concept.true_lexical.vocab_size() != vocab {
        return Err(Error::DimensionMismatch {
            context: "gen_pair vocabulary",
            expected: vocab,
            got: concept.true_lexical.vocab_size(),
        });
    }
    let dense = concept.true_lexical.densify();
    let mut txt = ModalityMaps::map_row(&maps.txt, &dense);
    for (t, n) in txt.iter_mut().zip(gaussian(rng, noise_sigma, maps.txt.cols())?) {
        *t += n;
    }

    let n_patches = grid * grid;
    let entries = concept.true_lexical.entries();
    let owners = sample(rng, n_patches, entries.len().min(n_patches)).into_vec();
    let mut ownership = vec![Vec::new(); n_patches];
    for (i, &(tok, _)) in entries.iter().enumerate() {
        ownership[owners[i % owners.len()]].push(tok);
    }

    let d_img = maps.img.cols();
    let mut img = Mat::zeros(n_patches, d_img);
    let mut patch_dense = vec![0.0; vocab];
    for (p, toks) in ownership.iter().enumerate() {
        for &t in toks {
            patch_dense[t as usize] = dense[t as usize];
        }
        let mut row = ModalityMaps::map_row(&maps.img, &patch_dense);
        for &t in toks {
            patch_dense[t as usize] = 0.0;
        }
        for (v, n) in row.iter_mut().zip(gaussian(rng, noise_sigma, d_img)?) {
            *v += n;
        }
        img.row_mut(p).copy_from_slice(&row);
    }

    Ok(PairedSample {
        id: concept.id,
        split: Split::Train,
        concept_id: concept.id,
        true_lexical: concept.true_lexical.clone(),
        img_features: FeatureSequence::new(img)?,
        txt_features: FeatureSequence::single(txt)?,
        ownership,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_concepts, stream_rng};
    use nalgebra::DMatrix;

    #[test]
    fn noiseless_one_hot_patches_equal_map_rows() {
        let maps = ModalityMaps::generate(16, 6, 6, 1).unwrap();
        let concepts = gen_concepts(16, 5, 1, 1).unwrap();
        let mut rng = stream_rng(0, 99);
        for c in &concepts {
            let s = gen_pair(c, 0.0, &maps, 2, &mut rng).unwrap();
            let (tok, _) = c.true_lexical.entries()[0];
            let owner = s.ownership.iter().position(|o| !o.is_empty()).unwrap();
            assert_eq!(s.img_features.as_mat().row(owner), maps.img.row(tok as usize));
            for (p, o) in s.ownership.iter().enumerate() {
                if o.is_empty() {
                    assert!(s.img_features.as_mat().row(p).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn every_token_lands_on_a_patch() {
        let maps = ModalityMaps::generate(64, 8, 8, 2).unwrap();
        let concepts = gen_concepts(64, 50, 6, 2).unwrap();
        let mut rng = stream_rng(2, 5);
        for grid in [1, 2, 4] {
            for c in &concepts {
                let s = gen_pair(c, 0.05, &maps, grid, &mut rng).unwrap();
                assert_eq!(s.ownership.len(), grid * grid);
                let mut owned: Vec<u32> = s.ownership.iter().flatten().copied().collect();
                owned.sort_unstable();
                let expect: Vec<u32> = c.true_lexical.entries().iter().map(|e| e.0).collect();
                assert_eq!(owned, expect);
            }
        }
    }

    #[test]
    fn least_squares_inverts_noiseless_text_features() {
        // With d_txt ≥ V the text map has full column rank, so the
        // pseudo-inverse recovers the dense concept exactly.
        let (v, d) = (24, 40);
        let maps = ModalityMaps::generate(v, 8, d, 4).unwrap();
        let m = DMatrix::from_row_slice(v, d, maps.txt.data());
        let pinv = m.clone().pseudo_inverse(1e-12).unwrap();
        let mut rng = stream_rng(4, 1);
        for c in gen_concepts(v, 10, 3, 4).unwrap() {
            let s = gen_pair(&c, 0.0, &maps, 2, &mut rng).unwrap();
            let y = DMatrix::from_row_slice(1, d, s.txt_features.as_mat().data());
            let recovered = y * &pinv;
            let truth = c.true_lexical.densify();
            for (r, t) in recovered.iter().zip(&truth) {
                assert!((r - t).abs() < 1e-8, "{r} vs {t}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let maps = ModalityMaps::generate(16, 4, 4, 0).unwrap();
        let c = &gen_concepts(16, 1, 2, 0).unwrap()[0];
        let mut rng = stream_rng(0, 0);
        assert!(gen_pair(c, -1.0, &maps, 2, &mut rng).is_err());
        assert!(gen_pair(c, 0.1, &maps, 0, &mut rng).is_err());
        let other = ModalityMaps::generate(8, 4, 4, 0).unwrap();
        assert!(gen_pair(c, 0.1, &other, 2, &mut rng).is_err());
    }
}
