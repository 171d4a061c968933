// SPDX-License-Identifier: Apache-2.0

//! Lexical heads: attention scores against a codebook, `elu1p`, optional
//! max-pooling over rows, then ℓ2 normalization.

use crate::error::{Error, Result};
use crate::lexcore::Codebook;
use crate::linalg::{l2_norm, Mat};

/// `x + 1` for `x ≥ 0`, `eˣ` otherwise. Strictly positive and C¹ at 0.
pub fn elu1p(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("elu1p input {x}")));
    }
    Ok(elu1p_raw(x))
}

#[inline]
pub(crate) fn elu1p_raw(x: f64) -> f64 {
    if x >= 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

#[inline]
pub fn elu1p_derivative(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn elu1p_mat(m: &Mat) -> Result<Mat> {
    if !m.is_finite() {
        return Err(Error::NonFinite("elu1p input matrix".into()));
    }
    Ok(m.map(elu1p_raw))
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_norm(v);
    if !norm.is_finite() {
        return Err(Error::NonFinite("vector norm".into()));
    }
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// n×d matrix of per-token or per-patch features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence(Mat);

impl FeatureSequence {
    pub fn new(features: Mat) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::invalid("feature sequence has no rows"));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("feature sequence".into()));
        }
        Ok(Self(features))
    }

    pub fn single(row: Vec<f64>) -> Result<Self> {
        Self::new(Mat::row_vector(row))
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// Length-V non-negative score vector with unit ℓ2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLexical(pub(crate) Vec<f64>);

impl DenseLexical {
    pub const NORM_TOL: f64 = 1e-9;

    /// Wraps an already normalized vector, checking the invariants.
    pub fn from_unit(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("lexical vector needs at least 2 entries"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::invalid(format!("lexical entry {v} is negative or non-finite")));
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > Self::NORM_TOL {
            return Err(Error::invalid(format!("lexical vector norm {norm} is not 1")));
        }
        Ok(Self(values))
    }

    /// Normalizes non-negative raw scores.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if let Some(v) = raw.iter().find(|v| **v < 0.0) {
            return Err(Error::invalid(format!("negative lexical score {v}")));
        }
        Ok(Self(l2_normalize(raw)?))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn vocab_size(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &DenseLexical) -> f64 {
        crate::linalg::dot(&self.0, &other.0)
    }

    /// Token ids by descending value, ties by ascending id.
    pub fn ranked(&self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as u32, v))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

fn check_dim(z: &Mat, codebook: &Codebook) -> Result<()> {
    if z.cols() != codebook.dim() {
        return Err(Error::DimensionMismatch {
            context: "lexical head",
            expected: codebook.dim(),
            got: z.cols(),
        });
    }
    Ok(())
}

/// Pre-normalization scores: `elu1p(z·Zᵀ)` max-pooled over `rows`.
pub fn pooled_scores(z: &Mat, codebook: &Codebook, rows: &[usize]) -> Result<Vec<f64>> {
    check_dim(z, codebook)?;
    if rows.is_empty() {
        return Err(Error::invalid("no rows selected for pooling"));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= z.rows()) {
        return Err(Error::invalid(format!(
            "row {r} out of range for {} rows",
            z.rows()
        )));
    }
    let selected = z.select_rows(rows);
    let act = elu1p_mat(&selected.matmul_bt(codebook.matrix())?)?;
    let mut pooled = act.row(0).to_vec();
    for row in act.iter_rows().skip(1) {
        for (p, &v) in pooled.iter_mut().zip(row) {
            if v > *p {
                *p = v;
            }
        }
    }
    Ok(pooled)
}

/// `Normalize ∘ elu1p(z·Zᵀ)` for a single feature row.
pub fn text_lexical_head(z: &[f64], codebook: &Codebook) -> Result<DenseLexical> {
    let z = Mat::row_vector(z.to_vec());
    DenseLexical::normalize(&pooled_scores(&z, codebook, &[0])?)
}

/// `Normalize ∘ MaxPool ∘ elu1p(z·Zᵀ)` over all rows of `z`.
pub fn image_lexical_head(z: &FeatureSequence, codebook: &Codebook) -> Result<DenseLexical> {
    let rows: Vec<usize> = (0..z.len()).collect();
    DenseLexical::normalize(&pooled_scores(z.as_mat(), codebook, &rows)?)
}

/// Same as [`image_lexical_head`] with the pooling restricted to `patch_ids`.
pub fn patch_lexical(
    z: &FeatureSequence,
    codebook: &Codebook,
    patch_ids: &[usize],
) -> Result<DenseLexical> {
    DenseLexical::normalize(&pooled_scores(z.as_mat(), codebook, patch_ids)?)
}
