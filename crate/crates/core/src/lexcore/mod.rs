// SPDX-License-Identifier: Apache-2.0

//! Vocabulary, codebooks, lexical heads and sparsification.
//!
//! A lexical representation scores every vocabulary token against a sample.
//! Heads turn a projected feature sequence into a non-negative unit vector
//! over the vocabulary; the sparse forms keep only the informative entries
//! and are what the retrieval index stores.

mod codebook;
mod heads;
mod sparse;
mod vocab;

pub use codebook::Codebook;
pub use heads::{
    elu1p, elu1p_derivative, elu1p_mat, image_lexical_head, l2_normalize, patch_lexical,
    pooled_scores, text_lexical_head, DenseLexical, FeatureSequence,
};
pub use sparse::{
    kept_count, prune_to_sparsity, read_sparse_jsonl, sparse_dot, sparsify_topk, sparsify_value,
    write_sparse_jsonl, SparseLexical, SparseRecord,
};
pub use vocab::Vocabulary;
