// SPDX-License-Identifier: Apache-2.0

//! Dataset generation and the on-disk container: a JSONL file of paired
//! samples, a JSONL file of patch scenes, and a JSON manifest recording the
//! config, seed, split boundaries and file digests.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::kv::{self, KvDoc};
use crate::lexcore::{FeatureSequence, SparseLexical};
use crate::linalg::Mat;
use crate::synth::{
    gen_concepts, gen_pair, gen_patch_scene, stream_rng, ModalityMaps, PairedSample, PatchScene,
    SceneConfig, Split, STREAM_PAIRS, STREAM_SCENES,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const SCENES_FILE: &str = "scenes.jsonl";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub vocab_size: usize,
    pub d_img: usize,
    pub d_txt: usize,
    pub grid: usize,
    pub max_active: usize,
    pub noise_sigma: f64,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
    pub scene_count: usize,
    pub scene: SceneConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 256,
            d_img: 64,
            d_txt: 64,
            grid: 4,
            max_active: 4,
            noise_sigma: 0.05,
            train_pairs: 4096,
            val_pairs: 128,
            test_pairs: 256,
            scene_count: 16,
            scene: SceneConfig::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut doc = KvDoc::parse(text)?;
        let config = Self::take_from(&mut doc)?;
        doc.finish()?;
        Ok(config)
    }

    pub(crate) fn take_from(doc: &mut KvDoc) -> Result<Self> {
        let d = Self::default();
        let config = Self {
            vocab_size: doc.take("vocab_size", d.vocab_size)?,
            d_img: doc.take("d_img", d.d_img)?,
            d_txt: doc.take("d_txt", d.d_txt)?,
            grid: doc.take("grid", d.grid)?,
            max_active: doc.take("max_active", d.max_active)?,
            noise_sigma: doc.take("noise_sigma", d.noise_sigma)?,
            train_pairs: doc.take("train_pairs", d.train_pairs)?,
            val_pairs: doc.take("val_pairs", d.val_pairs)?,
            test_pairs: doc.take("test_pairs", d.test_pairs)?,
            scene_count: doc.take("scene_count", d.scene_count)?,
            scene: SceneConfig {
                classes: doc.take("scene_classes", d.scene.classes)?,
                grid: doc.take("scene_grid", d.scene.grid)?,
                separation: doc.take("scene_separation", d.scene.separation)?,
                noise_sigma: doc.take("scene_noise_sigma", d.scene.noise_sigma)?,
                amplitude: doc.take("scene_amplitude", d.scene.amplitude)?,
            },
            seed: doc.take("seed", d.seed)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_kv(&self) -> String {
        kv::render([
            ("vocab_size", self.vocab_size.to_string()),
            ("d_img", self.d_img.to_string()),
            ("d_txt", self.d_txt.to_string()),
            ("grid", self.grid.to_string()),
            ("max_active", self.max_active.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("train_pairs", self.train_pairs.to_string()),
            ("val_pairs", self.val_pairs.to_string()),
            ("test_pairs", self.test_pairs.to_string()),
            ("scene_count", self.scene_count.to_string()),
            ("scene_classes", self.scene.classes.to_string()),
            ("scene_grid", self.scene.grid.to_string()),
            ("scene_separation", self.scene.separation.to_string()),
            ("scene_noise_sigma", self.scene.noise_sigma.to_string()),
            ("scene_amplitude", self.scene.amplitude.to_string()),
            ("seed", self.seed.to_string()),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_img", self.d_img),
            ("d_txt", self.d_txt),
            ("grid", self.grid),
            ("max_active", self.max_active),
            ("test_pairs", self.test_pairs),
        ];
        if self.vocab_size < 2 {
            return Err(Error::config("vocab_size", "must be at least 2"));
        }
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        if self.train_pairs < 2 {
            return Err(Error::config("train_pairs", "must be at least 2"));
        }
        if self.max_active >= self.vocab_size {
            return Err(Error::config("max_active", "must be smaller than vocab_size"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and ≥ 0"));
        }
        if self.scene_count > 0 {
            if self.scene.classes < 2 {
                return Err(Error::config("scene_classes", "must be at least 2"));
            }
            if self.scene.grid * self.scene.grid < self.scene.classes {
                return Err(Error::config("scene_grid", "grid has fewer patches than classes"));
            }
        }
        Ok(())
    }

    pub fn total_pairs(&self) -> usize {
        self.train_pairs + self.val_pairs + self.test_pairs
    }

    pub fn split_range(&self, split: Split) -> Range<usize> {
        let (a, b) = (self.train_pairs, self.train_pairs + self.val_pairs);
        match split {
            Split::Train => 0..a,
            Split::Val => a..b,
            Split::Test => b..self.total_pairs(),
        }
    }
}

/// Digest identifying a dataset: SHA-256 of its canonical config text.
pub fn config_hash(config: &SynthConfig) -> String {
    sha256_hex(config.to_kv().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub splits: Vec<(Split, usize, usize)>,
    pub files: Vec<FileDigest>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: u64,
    split: Split,
    concept_id: u64,
    true_lexical: Vec<(u32, f64)>,
    ownership: Vec<Vec<u32>>,
    txt_features: Vec<Vec<f64>>,
    img_features: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    id: u64,
    grid: usize,
    labels: Vec<usize>,
    class_tokens: Vec<u32>,
    min_center_distance: f64,
    degenerate: bool,
    features: Vec<Vec<f64>>,
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    m.iter_rows().map(<[f64]>::to_vec).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: SynthConfig,
    pub maps: ModalityMaps,
    pub train: Vec<PairedSample>,
    pub val: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
    pub scenes: Vec<PatchScene>,
}

impl Dataset {
    /// Pure function of the config (seed included). Samples are generated in
    /// parallel from per-index streams, so the result is independent of the
    /// worker count.
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let maps = ModalityMaps::generate(config.vocab_size, config.d_img, config.d_txt, seed)?;
        let concepts =
            gen_concepts(config.vocab_size, config.total_pairs(), config.max_active, seed)?;
        let samples: Vec<PairedSample> = concepts
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut rng = stream_rng(seed, STREAM_PAIRS + i as u64);
                gen_pair(c, config.noise_sigma, &maps, config.grid, &mut rng)
            })
            .collect::<Result<_>>()?;
        let scenes: Vec<PatchScene> = (0..config.scene_count)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, STREAM_SCENES + i as u64);
                gen_patch_scene(&maps, &config.scene, i as u64, &mut rng)
            })
            .collect::<Result<_>>()?;
        let mut out = Self {
            config: config.clone(),
            maps,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            scenes,
        };
        for (i, mut s) in samples.into_iter().enumerate() {
            let split = if config.split_range(Split::Train).contains(&i) {
                Split::Train
            } else if config.split_range(Split::Val).contains(&i) {
                Split::Val
            } else {
                Split::Test
            };
            s.split = split;
            out.split_mut(split).push(s);
        }
        Ok(out)
    }

    pub fn split(&self, split: Split) -> &[PairedSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<PairedSample> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    pub fn hash(&self) -> String {
        config_hash(&self.config)
    }

    pub fn all_samples(&self) -> impl Iterator<Item = &PairedSample> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    fn samples_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        for s in self.all_samples() {
            let rec = SampleRecord {
                id: s.id,
                split: s.split,
                concept_id: s.concept_id,
                true_lexical: s.true_lexical.entries().to_vec(),
                ownership: s.ownership.clone(),
                txt_features: rows_of(s.txt_features.as_mat()),
                img_features: rows_of(s.img_features.as_mat()),
            };
            serde_json::to_writer(&mut buf, &rec)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    fn scenes_jsonl(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        for s in &self.scenes {
            let rec = SceneRecord {
                id: s.id,
                grid: s.grid,
                labels: s.labels.clone(),
                class_tokens: s.class_tokens.clone(),
                min_center_distance: s.min_center_distance,
                degenerate: s.degenerate,
                features: rows_of(s.features.as_mat()),
            };
            serde_json::to_writer(&mut buf, &rec)?;
            buf.push(b'\n');
        }
        Ok(buf)
    }

    /// Writes the manifest first, then the data files it describes.
    pub fn save(&self, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir)?;
        let samples = self.samples_jsonl()?;
        let scenes = self.scenes_jsonl()?;
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: self.config.to_kv(),
            config_hash: self.hash(),
            seed: self.config.seed,
            splits: [Split::Train, Split::Val, Split::Test]
                .into_iter()
                .map(|s| {
                    let r = self.config.split_range(s);
                    (s, r.start, r.end)
                })
                .collect(),
            files: vec![
                FileDigest {
                    name: SAMPLES_FILE.into(),
                    sha256: sha256_hex(&samples),
                },
                FileDigest {
                    name: SCENES_FILE.into(),
                    sha256: sha256_hex(&scenes),
                },
            ],
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)?;
        fs::File::create(dir.join(SAMPLES_FILE))?.write_all(&samples)?;
        fs::File::create(dir.join(SCENES_FILE))?.write_all(&scenes)?;
        Ok(manifest)
    }

    pub fn load_manifest(dir: &Path) -> Result<Manifest> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::format(
                "dataset manifest",
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = Self::load_manifest(dir)?;
        let config = SynthConfig::from_kv(&manifest.config)?;
        if config_hash(&config) != manifest.config_hash {
            return Err(Error::format("dataset manifest", "config hash does not match config"));
        }
        let read_checked = |name: &str| -> Result<Vec<u8>> {
            let bytes = fs::read(dir.join(name))?;
            let expect = manifest
                .files
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| Error::format("dataset manifest", format!("no entry for {name}")))?;
            if sha256_hex(&bytes) != expect.sha256 {
                return Err(Error::format("dataset", format!("{name} digest mismatch")));
            }
            Ok(bytes)
        };
        let samples = read_checked(SAMPLES_FILE)?;
        let scenes = read_checked(SCENES_FILE)?;
        let maps = ModalityMaps::generate(config.vocab_size, config.d_img, config.d_txt, config.seed)?;

        let mut out = Self {
            config,
            maps,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
            scenes: Vec::new(),
        };
        let v = out.config.vocab_size;
        for line in samples.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            let rec: SampleRecord = serde_json::from_slice(line)?;
            let sample = PairedSample {
                id: rec.id,
                split: rec.split,
                concept_id: rec.concept_id,
                true_lexical: SparseLexical::new(v, rec.true_lexical)?,
                img_features: FeatureSequence::new(Mat::from_rows(&rec.img_features)?)?,
                txt_features: FeatureSequence::new(Mat::from_rows(&rec.txt_features)?)?,
                ownership: rec.ownership,
            };
            out.split_mut(rec.split).push(sample);
        }
        for line in scenes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
            let rec: SceneRecord = serde_json::from_slice(line)?;
            out.scenes.push(PatchScene {
                id: rec.id,
                grid: rec.grid,
                labels: rec.labels,
                class_tokens: rec.class_tokens,
                features: FeatureSequence::new(Mat::from_rows(&rec.features)?)?,
                min_center_distance: rec.min_center_distance,
                degenerate: rec.degenerate,
            });
        }
        for split in [Split::Train, Split::Val, Split::Test] {
            let expect = out.config.split_range(split).len();
            if out.split(split).len() != expect {
                return Err(Error::format(
                    "dataset",
                    format!("{split} split has {} samples, expected {expect}", out.split(split).len()),
                ));
            }
        }
        Ok(out)
    }
}
