// SPDX-License-Identifier: Apache-2.0

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::synth::{stream_rng, STREAM_MAPS};

/// Fixed linear "backbones" from vocabulary space to feature space. Row j of
/// each map is the unit-norm feature direction of token j.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMaps {
    pub img: Mat,
    pub txt: Mat,
}

impl ModalityMaps {
    pub fn generate(vocab_size: usize, d_img: usize, d_txt: usize, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, STREAM_MAPS);
        let mut draw = |d: usize| -> Mat {
            let mut m = Mat::zeros(vocab_size, d);
            for r in 0..vocab_size {
                let row = m.row_mut(r);
                for v in row.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.iter_mut().for_each(|x| *x /= norm);
            }
            m
        };
        let maps = Self {
            img: draw(d_img),
            txt: draw(d_txt),
        };
        maps.validate()?;
        Ok(maps)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("image", &self.img), ("text", &self.txt)] {
            if !m.is_finite() {
                return Err(Error::NonFinite(format!("{name} map")));
            }
            let full = m.rows().min(m.cols());
            let rank = numerical_rank(m, 1e-9);
            if rank < full {
                return Err(Error::invalid(format!(
                    "{name} map is rank deficient ({rank} < {full})"
                )));
            }
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.txt.rows()
    }

    /// `s·M` for a dense vocabulary-space row.
    pub fn map_row(map: &Mat, dense: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; map.cols()];
        for (j, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                for (o, m) in out.iter_mut().zip(map.row(j)) {
                    *o += v * m;
                }
            }
        }
        out
    }
}

/// Rank by Gaussian elimination with partial pivoting; pivots below
/// `tol` times the largest absolute entry count as zero.
pub fn numerical_rank(m: &Mat, tol: f64) -> usize {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let scale = a.data().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot, best) = (rank..rows)
            .map(|r| (r, a.get(r, c).abs()))
            .fold((rank, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol * scale {
            continue;
        }
        if pivot != rank {
            for k in 0..cols {
                let tmp = a.get(rank, k);
                a.set(rank, k, a.get(pivot, k));
                a.set(pivot, k, tmp);
            }
        }
        let p = a.get(rank, c);
        for r in rank + 1..rows {
            let f = a.get(r, c) / p;
            if f != 0.0 {
                for k in c..cols {
                    let v = a.get(r, k) - f * a.get(rank, k);
                    a.set(r, k, v);
                }
            }
        }
        rank += 1;
    }
    rank
}
