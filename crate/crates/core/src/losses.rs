// SPDX-License-Identifier: Apache-2.0

//! Training objectives: InfoNCE with a clipped learnable temperature, the
//! FLOPs sparsity loss, the overuse penalty and their weighted combination.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// N×V matrix whose row i is the lexical vector of sample i.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLexical(Mat);

impl BatchLexical {
    pub fn new(s: Mat) -> Result<Self> {
        if s.rows() == 0 || s.cols() == 0 {
            return Err(Error::invalid("empty lexical batch"));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("lexical batch".into()));
        }
        if let Some(v) = s.data().iter().find(|&&v| v < 0.0) {
            return Err(Error::invalid(format!("negative lexical entry {v}")));
        }
        Ok(Self(s))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Mat::from_rows(rows)?)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn vocab_size(&self) -> usize {
        self.0.cols()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }
}

/// Learnable temperature stored as `ln(1/τ)`.
///
/// The effective inverse temperature is clamped at `max_inverse`, which caps
/// the logit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    pub log_inverse: f64,
    pub max_inverse: f64,
}

impl Temperature {
    pub const INIT_TAU: f64 = 0.07;
    pub const MAX_INVERSE: f64 = 100.0;

    pub fn new(tau: f64, max_inverse: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
        }
        if !(max_inverse > 0.0) {
            return Err(Error::invalid(format!(
                "max inverse temperature must be positive, got {max_inverse}"
            )));
        }
        Ok(Self {
            log_inverse: -tau.ln(),
            max_inverse,
        })
    }

    pub fn tau(&self) -> f64 {
        (-self.log_inverse).exp()
    }

    /// `min(1/τ, max_inverse)`
    pub fn inverse(&self) -> f64 {
        self.log_inverse.exp().min(self.max_inverse)
    }

    /// Whether the clamp is active (the parameter then receives no gradient).
    pub fn is_clamped(&self) -> bool {
        self.log_inverse.exp() > self.max_inverse
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Self::new(Self::INIT_TAU, Self::MAX_INVERSE).expect("valid constants")
    }
}

/// Sparsity regularizer applied to each modality's batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Overuse,
    Flops,
    None,
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overuse" => Ok(Self::Overuse),
            "flops" => Ok(Self::Flops),
            "none" => Ok(Self::None),
            other => Err(Error::config(
                "penalty_kind",
                format!("expected overuse|flops|none, got {other:?}"),
            )),
        }
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Overuse => "overuse",
            Self::Flops => "flops",
            Self::None => "none",
        })
    }
}

/// Regularization weights with a quadratic warmup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub lambda_img: f64,
    pub lambda_txt: f64,
    pub warmup_steps: u64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            lambda_img: 5e-4,
            lambda_txt: 1e-3,
            warmup_steps: 2000,
        }
    }
}

/// `λ_final · min(1, (step / warmup)²)` for each modality.
pub fn lambda_at(schedule: &PenaltySchedule, step: u64) -> (f64, f64) {
    let w = schedule.warmup_steps.max(1) as f64;
    let ramp = (step as f64 / w).min(1.0).powi(2);
    (schedule.lambda_img * ramp, schedule.lambda_txt * ramp)
}

fn check_pair(a: &BatchLexical, b: &BatchLexical) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "info_nce batch size",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.vocab_size() != b.vocab_size() {
        return Err(Error::DimensionMismatch {
            context: "info_nce vocabulary size",
            expected: a.vocab_size(),
            got: b.vocab_size(),
        });
    }
    if a.len() < 2 {
        return Err(Error::invalid("contrastive loss needs a batch of at least 2 pairs"));
    }
    Ok(())
}

/// Row-wise softmax cross-entropy against the diagonal, averaged over rows.
pub(crate) fn diagonal_cross_entropy(logits: &Mat) -> f64 {
    let n = logits.rows();
    let mut total = 0.0;
    for (i, row) in logits.iter_rows().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        total += lse - row[i];
    }
    total / n as f64
}

/// One direction of the contrastive loss: rows of `queries` retrieve rows of
/// `keys`, with row i of each forming the positive pair.
pub fn info_nce(queries: &BatchLexical, keys: &BatchLexical, temp: &Temperature) -> Result<f64> {
    check_pair(queries, keys)?;
    if !temp.log_inverse.is_finite() {
        return Err(Error::invalid("non-finite temperature"));
    }
    let scale = temp.inverse();
    let logits = queries.as_mat().matmul_bt(keys.as_mat())?.map(|v| v * scale);
    Ok(diagonal_cross_entropy(&logits))
}

/// `Σ_j s̄_j²` where `s̄_j` is the batch mean of column j.
pub fn flops_loss(s: &BatchLexical) -> f64 {
    s.as_mat().column_means().iter().map(|m| m * m).sum()
}

/// `V · Σ_j (s̄_j / Σ_k s̄_k) · s̄_j²`: the FLOPs loss reweighted by each
/// token's share of the total activation mass.
pub fn overuse_penalty(s: &BatchLexical) -> Result<f64> {
    let means = s.as_mat().column_means();
    let mass: f64 = means.iter().sum();
    if mass <= 0.0 {
        return Err(Error::invalid(
            "overuse penalty undefined for an all-zero batch",
        ));
    }
    let cubes: f64 = means.iter().map(|m| m * m * m).sum();
    Ok(means.len() as f64 * cubes / mass)
}

pub fn penalty(kind: PenaltyKind, s: &BatchLexical) -> Result<f64> {
    match kind {
        PenaltyKind::Overuse | PenaltyKind::None => overuse_penalty(s),
        PenaltyKind::Flops => Ok(flops_loss(s)),
    }
}

/// Per-term view of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_t2i: f64,
    pub l_i2t: f64,
    /// Regularizer value on the image batch (the configured penalty kind).
    pub overuse_img: f64,
    pub overuse_txt: f64,
    pub tau: f64,
    pub lambda_img: f64,
    pub lambda_txt: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str =
        "step,l_t2i,l_i2t,overuse_img,overuse_txt,tau,lambda_img,lambda_txt";

    pub fn total(&self) -> f64 {
        self.l_t2i
            + self.l_i2t
            + self.lambda_img * self.overuse_img
            + self.lambda_txt * self.overuse_txt
    }

    pub fn contrastive(&self) -> f64 {
        self.l_t2i + self.l_i2t
    }

    pub fn csv_row(&self, step: u64) -> String {
        format!(
            "{step},{},{},{},{},{},{},{}",
            self.l_t2i,
            self.l_i2t,
            self.overuse_img,
            self.overuse_txt,
            self.tau,
            self.lambda_img,
            self.lambda_txt
        )
    }
}

/// `ℓ_t2i + ℓ_i2t + λ_I·ℓ_overuse(S_img) + λ_T·ℓ_overuse(S_txt)`.
pub fn total_objective(
    s_img: &BatchLexical,
    s_txt: &BatchLexical,
    temp: &Temperature,
    schedule: &PenaltySchedule,
    step: u64,
) -> Result<LossBreakdown> {
    objective_with_penalty(PenaltyKind::Overuse, s_img, s_txt, temp, schedule, step)
}

/// [`total_objective`] with a selectable regularizer. `PenaltyKind::None`
/// still reports the overuse value but weights it by zero.
pub fn objective_with_penalty(
    kind: PenaltyKind,
    s_img: &BatchLexical,
    s_txt: &BatchLexical,
    temp: &Temperature,
    schedule: &PenaltySchedule,
    step: u64,
) -> Result<LossBreakdown> {
    let (lambda_img, lambda_txt) = match kind {
        PenaltyKind::None => (0.0, 0.0),
        _ => lambda_at(schedule, step),
    };
    Ok(LossBreakdown {
        l_t2i: info_nce(s_txt, s_img, temp)?,
        l_i2t: info_nce(s_img, s_txt, temp)?,
        overuse_img: penalty(kind, s_img)?,
        overuse_txt: penalty(kind, s_txt)?,
        tau: temp.tau(),
        lambda_img,
        lambda_txt,
    })
}
