// SPDX-License-Identifier: Apache-2.0

//! Synthetic stand-ins for frozen backbones and paired data.
//!
//! Every sample carries ground-truth lexical content: a sparse concept over
//! the vocabulary. Frozen "backbone features" are fixed random linear maps of
//! that content plus Gaussian noise. Image samples spread the concept's
//! tokens over a few patches, so no single patch sees the whole concept.

mod concepts;
mod dataset;
mod maps;
mod pairs;
mod scene;

pub use concepts::{gen_concepts, support_capacity, Concept};
pub use dataset::{
    config_hash, Dataset, Manifest, SynthConfig, MANIFEST_FILE, SAMPLES_FILE, SCENES_FILE,
};
pub use maps::{numerical_rank, ModalityMaps};
pub use pairs::{gen_pair, PairedSample, Split};
pub use scene::{gen_patch_scene, PatchScene, SceneConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_MAPS: u64 = 1;
pub(crate) const STREAM_CONCEPTS: u64 = 2;
pub(crate) const STREAM_PAIRS: u64 = 1 << 32;
pub(crate) const STREAM_SCENES: u64 = 2 << 32;

/// Independent generator for one purpose/index under a master seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
