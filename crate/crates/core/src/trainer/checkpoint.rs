// SPDX-License-Identifier: Apache-2.0

//! Binary checkpoint, little-endian throughout:
//!
//! ```text
//! magic "LXALCKPT" | version u32 | config (len u32 + utf8) | dataset hash
//! (len u32 + utf8) | step u64 | adam t u64 | tensor count u32 |
//! tensors (name len u32 + utf8, rows u64, cols u64, f64 data) | sha256
//! of everything before it
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Mat;

use super::config::TrainConfig;
use super::optim::AdamState;
use super::params::{EncoderParams, PARAM_NAMES};

const MAGIC: &[u8; 8] = b"LXALCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub dataset_hash: String,
    /// Optimizer steps completed.
    pub step: u64,
    pub params: EncoderParams,
    pub adam: AdamState,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.config.to_kv());
        put_str(&mut out, &self.dataset_hash);
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.adam.t.to_le_bytes());
        let params = self.params.to_mats();
        let groups = [("param", &params), ("adam_m", &self.adam.m), ("adam_v", &self.adam.v)];
        let count: usize = groups.iter().map(|(_, g)| g.len()).sum();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        for (prefix, mats) in groups {
            for (name, m) in PARAM_NAMES.iter().zip(mats.iter()) {
                put_str(&mut out, &format!("{prefix}/{name}"));
                out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
                out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
                for v in m.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::format("checkpoint", "missing magic header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::format("checkpoint", "integrity digest does not match contents"));
        }
        let mut r = Reader { buf: body, pos: MAGIC.len() };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let config = TrainConfig::from_kv(&r.string()?, TrainConfig::desk())?;
        let dataset_hash = r.string()?;
        let step = r.u64()?;
        let t = r.u64()?;
        let count = r.u32()? as usize;
        if count != 3 * PARAM_NAMES.len() {
            return Err(Error::format("checkpoint", format!("unexpected tensor count {count}")));
        }
        let mut mats = Vec::with_capacity(count);
        for i in 0..count {
            let prefix = ["param", "adam_m", "adam_v"][i / PARAM_NAMES.len()];
            let want = format!("{prefix}/{}", PARAM_NAMES[i % PARAM_NAMES.len()]);
            let name = r.string()?;
            if name != want {
                return Err(Error::format("checkpoint", format!("expected tensor {want}, found {name}")));
            }
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::format("checkpoint", format!("tensor {name} is truncated")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            mats.push(Mat::from_vec(rows, cols, data)?);
        }
        if r.remaining() != 0 {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        let v = mats.split_off(2 * PARAM_NAMES.len());
        let m = mats.split_off(PARAM_NAMES.len());
        let params = EncoderParams::from_mats(mats, config.max_inverse_temp)?;
        let shapes = params.to_mats();
        for (a, b) in shapes.iter().zip(&m).chain(shapes.iter().zip(&v)) {
            if a.shape() != b.shape() {
                return Err(Error::format("checkpoint", "optimizer moments disagree with parameters"));
            }
        }
        Ok(Self {
            config,
            dataset_hash,
            step,
            params,
            adam: AdamState { t, m, v },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.remaining() < n {
            return Err(Error::format("checkpoint", "unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "string is not utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let config = TrainConfig::desk();
        let maps = crate::synth::ModalityMaps::generate(12, 6, 5, 1).unwrap();
        let params = EncoderParams::init(&config, &maps, &mut rng).unwrap();
        let mut adam = AdamState::new(&params.to_mats());
        adam.t = 17;
        adam.m[3].set(0, 1, -0.25);
        adam.v[9].set(2, 2, 1e-300);
        Checkpoint {
            config,
            dataset_hash: "ab".repeat(32),
            step: 17,
            params,
            adam,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        let k = bytes.len() / 2;
        bytes[k] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format { .. })));
        assert!(Checkpoint::from_bytes(b"LXALCKPT").is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all, clearly not").is_err());
    }
}
