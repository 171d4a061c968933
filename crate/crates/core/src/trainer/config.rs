// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::kv::{self, KvDoc};
use crate::losses::{PenaltyKind, PenaltySchedule};

/// Named default sets. `Desk` is sized for minutes on a CPU; `Paper` keeps
/// the full-scale optimizer settings for reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::config("profile", format!("expected desk|paper, got {other:?}"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_iters: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub lambda_img: f64,
    pub lambda_txt: f64,
    pub penalty_warmup_steps: u64,
    pub penalty_kind: PenaltyKind,
    pub seed: u64,
    /// Lexical feature dimension d shared by both codebooks.
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub init_tau: f64,
    pub max_inverse_temp: f64,
    /// Weight of the direction shared by every codebook row.
    pub codebook_shared: f64,
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            lr: 5e-3,
            batch_size: 64,
            epochs: 30,
            warmup_iters: 100,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-6,
            lambda_img: 5e-2,
            lambda_txt: 1e-1,
            penalty_warmup_steps: 200,
            penalty_kind: PenaltyKind::Overuse,
            seed: 0,
            latent_dim: 64,
            hidden_dim: 128,
            init_tau: 0.07,
            max_inverse_temp: 100.0,
            codebook_shared: 0.5,
        }
    }

    pub fn paper() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 6144,
            epochs: 12,
            warmup_iters: 1000,
            lambda_img: 5e-4,
            lambda_txt: 1e-3,
            penalty_warmup_steps: 2000,
            ..Self::desk()
        }
    }

    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self::desk(),
            Profile::Paper => Self::paper(),
        }
    }

    /// Parses overrides on top of `base`. Unknown keys are errors.
    pub fn from_kv(text: &str, base: Self) -> Result<Self> {
        let mut doc = KvDoc::parse(text)?;
        let config = Self::take_from(&mut doc, base)?;
        doc.finish()?;
        Ok(config)
    }

    pub(crate) fn take_from(doc: &mut KvDoc, b: Self) -> Result<Self> {
        let config = Self {
            lr: doc.take("lr", b.lr)?,
            batch_size: doc.take("batch_size", b.batch_size)?,
            epochs: doc.take("epochs", b.epochs)?,
            warmup_iters: doc.take("warmup_iters", b.warmup_iters)?,
            beta1: doc.take("beta1", b.beta1)?,
            beta2: doc.take("beta2", b.beta2)?,
            adam_eps: doc.take("adam_eps", b.adam_eps)?,
            lambda_img: doc.take("lambda_img", b.lambda_img)?,
            lambda_txt: doc.take("lambda_txt", b.lambda_txt)?,
            penalty_warmup_steps: doc.take("penalty_warmup_steps", b.penalty_warmup_steps)?,
            penalty_kind: doc.take("penalty_kind", b.penalty_kind)?,
            seed: doc.take("seed", b.seed)?,
            latent_dim: doc.take("latent_dim", b.latent_dim)?,
            hidden_dim: doc.take("hidden_dim", b.hidden_dim)?,
            init_tau: doc.take("init_tau", b.init_tau)?,
            max_inverse_temp: doc.take("max_inverse_temp", b.max_inverse_temp)?,
            codebook_shared: doc.take("codebook_shared", b.codebook_shared)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_kv(&self) -> String {
        kv::render([
            ("lr", self.lr.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("warmup_iters", self.warmup_iters.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("lambda_img", self.lambda_img.to_string()),
            ("lambda_txt", self.lambda_txt.to_string()),
            ("penalty_warmup_steps", self.penalty_warmup_steps.to_string()),
            ("penalty_kind", self.penalty_kind.to_string()),
            ("seed", self.seed.to_string()),
            ("latent_dim", self.latent_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("init_tau", self.init_tau.to_string()),
            ("max_inverse_temp", self.max_inverse_temp.to_string()),
            ("codebook_shared", self.codebook_shared.to_string()),
        ])
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_kv().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be positive, got {v}")))
            }
        };
        pos("lr", self.lr)?;
        pos("adam_eps", self.adam_eps)?;
        pos("init_tau", self.init_tau)?;
        pos("max_inverse_temp", self.max_inverse_temp)?;
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(name, format!("must be in [0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("lambda_img", self.lambda_img),
            ("lambda_txt", self.lambda_txt),
            ("codebook_shared", self.codebook_shared),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be ≥ 0, got {v}")));
            }
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        for (name, v) in [
            ("epochs", self.epochs),
            ("latent_dim", self.latent_dim),
            ("hidden_dim", self.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.penalty_warmup_steps == 0 {
            return Err(Error::config("penalty_warmup_steps", "must be positive"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> PenaltySchedule {
        PenaltySchedule {
            lambda_img: self.lambda_img,
            lambda_txt: self.lambda_txt,
            warmup_steps: self.penalty_warmup_steps,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}
