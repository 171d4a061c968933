// SPDX-License-Identifier: Apache-2.0

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// V×d matrix of lexical codes, one row per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    matrix: Mat,
    frozen: bool,
}

impl Codebook {
    pub fn new(matrix: Mat, frozen: bool) -> Result<Self> {
        if matrix.rows() < 2 || matrix.cols() == 0 {
            return Err(Error::invalid(format!(
                "codebook must be at least 2×1, got {}×{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("codebook entries".into()));
        }
        Ok(Self { matrix, frozen })
    }

    /// A trainable copy of this codebook.
    pub fn thawed_copy(&self) -> Self {
        Self {
            matrix: self.matrix.clone(),
            frozen: false,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Mutable access to the codes; refused for frozen codebooks.
    pub fn matrix_mut(&mut self) -> Result<&mut Mat> {
        if self.frozen {
            return Err(Error::invalid("attempted to modify a frozen codebook"));
        }
        Ok(&mut self.matrix)
    }

    /// SHA-256 over the shape and the little-endian bytes of every entry.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.matrix.rows() as u64).to_le_bytes());
        h.update((self.matrix.cols() as u64).to_le_bytes());
        for v in self.matrix.data() {
            h.update(v.to_le_bytes());
        }
        crate::digest::hex_string(&h.finalize())
    }
}
