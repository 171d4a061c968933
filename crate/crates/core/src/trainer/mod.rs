// SPDX-License-Identifier: Apache-2.0

//! Incremental fine-tuning at toy scale: per-modality projectors feeding two
//! lexical codebooks. The text codebook is frozen; the image codebook starts
//! as an exact copy of it and adapts. Adam with warmup and cosine decay.

mod checkpoint;
mod config;
mod graph;
mod optim;
mod params;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{Profile, TrainConfig};
pub use graph::{gradcheck_instance, record_objective, ObjectiveGraph, ObjectiveNodes};
pub use optim::{lr_at, AdamState};
pub use params::{EncoderParams, Projector, PARAM_NAMES, TRAINABLE};
pub use train::{resume, train, TrainOutcome, Trainer};
