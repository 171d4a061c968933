// SPDX-License-Identifier: Apache-2.0

//! Sparse lexical vision-language alignment at desk scale.
//!
//! Both modalities are encoded into non-negative, unit-norm score vectors over
//! one shared vocabulary. Each modality owns a codebook of token embeddings;
//! the text codebook stays frozen while the image codebook adapts. Training
//! combines a symmetric InfoNCE objective with a frequency-weighted sparsity
//! penalty, and the learned vectors are searched with an inverted index.

pub mod error;
pub mod linalg;

pub mod gradcore;
pub mod lexcore;
pub mod losses;
pub mod patchdis;
pub mod retrieval;
pub mod synth;
pub mod trainer;

pub mod concentration;
pub mod digest;
pub mod kv;

pub use error::{Error, Result};
pub use linalg::Mat;
