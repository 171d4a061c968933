// SPDX-License-Identifier: Apache-2.0

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::gradcore::{NodeId, Tape};
use crate::linalg::Mat;
use crate::losses::{lambda_at, LossBreakdown, PenaltyKind};
use crate::synth::{stream_rng, Dataset, PairedSample};

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::graph::{record_objective, ObjectiveGraph};
use super::optim::{lr_at, AdamState};
use super::params::{EncoderParams, TRAINABLE};

const STREAM_INIT: u64 = 3 << 32;
const STREAM_EPOCHS: u64 = 4 << 32;
const THETA: usize = 10;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// One row per optimizer step taken by this run.
    pub metrics: Vec<(u64, LossBreakdown)>,
}

impl TrainOutcome {
    pub fn params(&self) -> &EncoderParams {
        &self.checkpoint.params
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }
}

pub(crate) fn metrics_csv(rows: &[(u64, LossBreakdown)]) -> String {
    let mut s = String::from(LossBreakdown::CSV_HEADER);
    s.push('\n');
    for (step, b) in rows {
        s.push_str(&b.csv_row(*step));
        s.push('\n');
    }
    s
}

/// Training loop state. The batch drawn at a step depends only on the seed
/// and the step, so a run resumed from a checkpoint replays the same data.
pub struct Trainer<'a> {
    config: TrainConfig,
    dataset: &'a Dataset,
    params: Vec<Mat>,
    adam: AdamState,
    step: u64,
    metrics: Vec<(u64, LossBreakdown)>,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, dataset: &'a Dataset) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, STREAM_INIT);
        let params = EncoderParams::init(&config, &dataset.maps, &mut rng)?.to_mats();
        let adam = AdamState::new(&params);
        let t = Self {
            config,
            dataset,
            params,
            adam,
            step: 0,
            metrics: Vec::new(),
            epoch_order: None,
        };
        t.steps_per_epoch()?;
        Ok(t)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint, dataset: &'a Dataset) -> Result<Self> {
        let found = dataset.hash();
        if checkpoint.dataset_hash != found {
            return Err(Error::HashMismatch {
                expected: checkpoint.dataset_hash,
                found,
            });
        }
        let c = &dataset.config;
        let p = &checkpoint.params;
        if p.vocab_size() != c.vocab_size || p.txt.input_dim() != c.d_txt || p.img.input_dim() != c.d_img {
            return Err(Error::format("checkpoint", "parameter shapes do not fit the dataset"));
        }
        let t = Self {
            params: checkpoint.params.to_mats(),
            config: checkpoint.config,
            dataset,
            adam: checkpoint.adam,
            step: checkpoint.step,
            metrics: Vec::new(),
            epoch_order: None,
        };
        t.steps_per_epoch()?;
        Ok(t)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn metrics(&self) -> &[(u64, LossBreakdown)] {
        &self.metrics
    }

    pub fn steps_per_epoch(&self) -> Result<u64> {
        let n = self.dataset.train.len() / self.config.batch_size;
        if n == 0 {
            return Err(Error::config(
                "batch_size",
                format!(
                    "{} exceeds the {} training pairs",
                    self.config.batch_size,
                    self.dataset.train.len()
                ),
            ));
        }
        Ok(n as u64)
    }

    pub fn total_steps(&self) -> u64 {
        self.steps_per_epoch().expect("checked at construction") * self.config.epochs as u64
    }

    pub fn params(&self) -> Result<EncoderParams> {
        EncoderParams::from_mats(self.params.clone(), self.config.max_inverse_temp)
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            config: self.config.clone(),
            dataset_hash: self.dataset.hash(),
            step: self.step,
            params: self.params()?,
            adam: self.adam.clone(),
        })
    }

    /// Training-set indices of the batch used at `step`.
    pub fn batch_indices(&mut self, step: u64) -> Vec<usize> {
        let spe = self.steps_per_epoch().expect("checked at construction");
        let epoch = step / spe;
        let within = (step % spe) as usize;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..self.dataset.train.len()).collect();
            order.shuffle(&mut stream_rng(self.config.seed, STREAM_EPOCHS + epoch));
            self.epoch_order = Some((epoch, order));
        }
        let order = &self.epoch_order.as_ref().expect("just set").1;
        let b = self.config.batch_size;
        order[within * b..(within + 1) * b].to_vec()
    }

    /// Runs until `limit` steps are complete (capped at the schedule length).
    pub fn run_until(&mut self, limit: u64) -> Result<()> {
        let end = limit.min(self.total_steps());
        while self.step < end {
            self.train_step()?;
        }
        Ok(())
    }

    fn train_step(&mut self) -> Result<LossBreakdown> {
        let step = self.step;
        let idx = self.batch_indices(step);
        let batch: Vec<&PairedSample> = idx.iter().map(|&i| &self.dataset.train[i]).collect();
        let (li, lt) = match self.config.penalty_kind {
            PenaltyKind::None => (0.0, 0.0),
            _ => lambda_at(&self.config.schedule(), step),
        };
        let graph = ObjectiveGraph {
            x_txt: Mat::vstack(&batch.iter().map(|s| s.txt_features.as_mat()).collect::<Vec<_>>())?,
            x_img: Mat::vstack(&batch.iter().map(|s| s.img_features.as_mat()).collect::<Vec<_>>())?,
            patches: batch[0].img_features.len(),
            kind: self.config.penalty_kind,
            lambda_img: li,
            lambda_txt: lt,
            max_inverse: self.config.max_inverse_temp,
        };
        let at_step = |e: Error| match e {
            Error::Numeric { node, op, detail } => Error::Numeric {
                node,
                op,
                detail: format!("{detail} (training step {step})"),
            },
            other => other,
        };
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect::<Result<_>>()
            .map_err(at_step)?;
        let nodes = record_objective(&graph, &mut tape, &ids).map_err(at_step)?;
        let grads = tape.backward(nodes.loss).map_err(at_step)?;

        let breakdown = LossBreakdown {
            l_t2i: tape.scalar(nodes.l_t2i),
            l_i2t: tape.scalar(nodes.l_i2t),
            overuse_img: tape.scalar(nodes.pen_img),
            overuse_txt: tape.scalar(nodes.pen_txt),
            tau: (-self.params[THETA].get(0, 0)).exp(),
            lambda_img: li,
            lambda_txt: lt,
        };
        let lr = lr_at(self.config.lr, self.config.warmup_iters, self.total_steps(), step);
        self.adam.step(&self.config, lr, &mut self.params, &grads, &TRAINABLE)?;
        let cap = self.config.max_inverse_temp.ln();
        let theta = &mut self.params[THETA];
        if theta.get(0, 0) > cap {
            theta.set(0, 0, cap);
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!(
                "parameter {} after training step {step}",
                super::PARAM_NAMES[i]
            )));
        }
        self.metrics.push((step, breakdown));
        self.step += 1;
        Ok(breakdown)
    }

    pub fn finish(self) -> Result<TrainOutcome> {
        Ok(TrainOutcome {
            checkpoint: self.checkpoint()?,
            metrics: self.metrics,
        })
    }
}

/// Trains from scratch over the full schedule.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<TrainOutcome> {
    let mut t = Trainer::new(config.clone(), dataset)?;
    t.run_until(u64::MAX)?;
    t.finish()
}

/// Continues a checkpointed run to the end of its schedule.
pub fn resume(checkpoint: Checkpoint, dataset: &Dataset) -> Result<TrainOutcome> {
    let mut t = Trainer::from_checkpoint(checkpoint, dataset)?;
    t.run_until(u64::MAX)?;
    t.finish()
}
