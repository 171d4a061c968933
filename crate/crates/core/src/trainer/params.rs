// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use rayon::prelude::*;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lexcore::{
    image_lexical_head, l2_normalize, patch_lexical, text_lexical_head, Codebook, DenseLexical,
    FeatureSequence,
};
use crate::linalg::Mat;
use crate::losses::Temperature;
use crate::synth::{ModalityMaps, PairedSample};

use super::config::TrainConfig;

/// Flat parameter order used by the tape, the optimizer and checkpoints.
pub const PARAM_NAMES: [&str; 11] = [
    "txt_w1", "txt_b1", "txt_w2", "txt_b2", "img_w1", "img_b1", "img_w2", "img_b2", "z_txt",
    "z_img", "log_inv_temp",
];

/// Which entries of [`PARAM_NAMES`] the optimizer updates. The text
/// codebook is frozen; its gradient is computed and dropped.
pub const TRAINABLE: [bool; 11] = [
    true, true, true, true, true, true, true, true, false, true, true,
];

/// `tanh(x·W1 + b1)·W2 + b2`, applied row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

impl Projector {
    pub fn init(d_in: usize, hidden: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w1: gaussian(d_in, hidden, (1.0 / d_in as f64).sqrt(), rng),
            b1: Mat::zeros(1, hidden),
            w2: gaussian(hidden, d_out, (1.0 / hidden as f64).sqrt(), rng),
            b2: Mat::zeros(1, d_out),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn forward(&self, x: &Mat) -> Result<Mat> {
        let mut h = x.matmul(&self.w1)?;
        add_bias(&mut h, &self.b1);
        let mut z = h.map(f64::tanh).matmul(&self.w2)?;
        add_bias(&mut z, &self.b2);
        Ok(z)
    }

    fn check(&self, which: &str) -> Result<()> {
        let h = self.w1.cols();
        let d = self.w2.cols();
        if self.b1.shape() != (1, h) || self.w2.rows() != h || self.b2.shape() != (1, d) {
            return Err(Error::format("parameters", format!("{which} projector shapes disagree")));
        }
        Ok(())
    }
}

fn add_bias(m: &mut Mat, bias: &Mat) {
    let b = bias.row(0).to_vec();
    for r in 0..m.rows() {
        for (v, bv) in m.row_mut(r).iter_mut().zip(&b) {
            *v += bv;
        }
    }
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Mat {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Mat::from_vec(rows, cols, data).expect("shape matches")
}

/// Linear map from the text backbone space into the latent space: the
/// identity when the widths agree, otherwise a scaled Gaussian matrix that
/// roughly preserves inner products.
fn text_embedding(d_txt: usize, dim: usize, rng: &mut impl Rng) -> Mat {
    if d_txt == dim {
        let mut q = Mat::zeros(dim, dim);
        for i in 0..dim {
            q.set(i, i, 1.0);
        }
        return q;
    }
    gaussian(d_txt, dim, (1.0 / dim as f64).sqrt(), rng)
}

/// The frozen text codebook: the text backbone's token table carried into
/// the latent space, plus a shared offset `shared·u` on every row. The
/// common direction lets one bias vector push every score down at once,
/// which is what makes sparse activations reachable.
pub(crate) fn init_codebook(txt_map: &Mat, q: &Mat, shared: f64, rng: &mut impl Rng) -> Result<Mat> {
    let dim = q.cols();
    let u: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let u = l2_normalize(&u)?;
    let mut m = txt_map.matmul(q)?;
    for j in 0..m.rows() {
        for (v, uk) in m.row_mut(j).iter_mut().zip(&u) {
            *v += shared * uk;
        }
    }
    Ok(m)
}

/// Pre-activation scale of the near-identity text path.
const TEXT_PATH_GAIN: f64 = 0.5;

/// Text projector that starts as `x ↦ x·q` (tanh in its linear range on the
/// first hidden units), so token j's text feature lands near codebook row j
/// before any fine-tuning. Remaining hidden units start random with zero
/// output weights.
fn pretrained_text_projector(q: &Mat, hidden: usize, rng: &mut impl Rng) -> Result<Projector> {
    let (d_txt, dim) = q.shape();
    if hidden < d_txt {
        return Err(Error::config(
            "hidden_dim",
            format!("must be at least the text feature width {d_txt}"),
        ));
    }
    let mut p = Projector::init(d_txt, hidden, dim, rng);
    for i in 0..d_txt {
        for h in 0..d_txt {
            p.w1.set(i, h, if i == h { TEXT_PATH_GAIN } else { 0.0 });
        }
    }
    for h in 0..hidden {
        for o in 0..dim {
            let v = if h < d_txt { q.get(h, o) / TEXT_PATH_GAIN } else { 0.0 };
            p.w2.set(h, o, v);
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub txt: Projector,
    pub img: Projector,
    pub z_txt: Codebook,
    pub z_img: Codebook,
    pub temperature: Temperature,
}

impl EncoderParams {
    /// Starting point for fine-tuning: a text side that is already lexical
    /// (projector and frozen codebook agree on token identity), a random
    /// image projector, and an image codebook copied from the text one.
    pub fn init(config: &TrainConfig, maps: &ModalityMaps, rng: &mut impl Rng) -> Result<Self> {
        let d = config.latent_dim;
        let q = text_embedding(maps.txt.cols(), d, rng);
        let z_txt = Codebook::new(init_codebook(&maps.txt, &q, config.codebook_shared, rng)?, true)?;
        let z_img = z_txt.thawed_copy();
        Ok(Self {
            txt: pretrained_text_projector(&q, config.hidden_dim, rng)?,
            img: Projector::init(maps.img.cols(), config.hidden_dim, d, rng),
            z_txt,
            z_img,
            temperature: Temperature::new(config.init_tau, config.max_inverse_temp)?,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.z_txt.vocab_size()
    }

    pub fn to_mats(&self) -> Vec<Mat> {
        vec![
            self.txt.w1.clone(),
            self.txt.b1.clone(),
            self.txt.w2.clone(),
            self.txt.b2.clone(),
            self.img.w1.clone(),
            self.img.b1.clone(),
            self.img.w2.clone(),
            self.img.b2.clone(),
            self.z_txt.matrix().clone(),
            self.z_img.matrix().clone(),
            Mat::scalar(self.temperature.log_inverse),
        ]
    }

    pub fn from_mats(mats: Vec<Mat>, max_inverse: f64) -> Result<Self> {
        if mats.len() != PARAM_NAMES.len() {
            return Err(Error::format(
                "parameters",
                format!("expected {} tensors, got {}", PARAM_NAMES.len(), mats.len()),
            ));
        }
        let mut it = mats.into_iter();
        let mut next = || it.next().expect("length checked");
        let txt = Projector { w1: next(), b1: next(), w2: next(), b2: next() };
        let img = Projector { w1: next(), b1: next(), w2: next(), b2: next() };
        let z_txt = Codebook::new(next(), true)?;
        let z_img = Codebook::new(next(), false)?;
        let theta = next();
        if theta.shape() != (1, 1) || !theta.is_finite() {
            return Err(Error::format("parameters", "temperature must be a finite scalar"));
        }
        txt.check("text")?;
        img.check("image")?;
        if z_txt.matrix().shape() != z_img.matrix().shape()
            || txt.output_dim() != z_txt.dim()
            || img.output_dim() != z_img.dim()
        {
            return Err(Error::format("parameters", "codebook shapes disagree with projectors"));
        }
        Ok(Self {
            txt,
            img,
            z_txt,
            z_img,
            temperature: Temperature {
                log_inverse: theta.get(0, 0),
                max_inverse,
            },
        })
    }

    /// Text features (one row per sample) to dense lexical vectors.
    pub fn encode_text(&self, features: &Mat) -> Result<Vec<DenseLexical>> {
        let z = self.txt.forward(features)?;
        z.iter_rows().map(|row| text_lexical_head(row, &self.z_txt)).collect()
    }

    /// Patch features of one image to its pooled lexical vector.
    pub fn encode_image(&self, patches: &FeatureSequence) -> Result<DenseLexical> {
        let z = FeatureSequence::new(self.img.forward(patches.as_mat())?)?;
        image_lexical_head(&z, &self.z_img)
    }

    pub fn encode_images<'a>(
        &self,
        images: impl IntoIterator<Item = &'a FeatureSequence>,
    ) -> Result<Vec<DenseLexical>> {
        images.into_iter().map(|img| self.encode_image(img)).collect()
    }

    /// Text and image vectors for paired samples, in sample order.
    pub fn encode_pairs(&self, samples: &[PairedSample]) -> Result<(Vec<DenseLexical>, Vec<DenseLexical>)> {
        if samples.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        let rows: Vec<&Mat> = samples.iter().map(|s| s.txt_features.as_mat()).collect();
        let txt = self.encode_text(&Mat::vstack(&rows)?)?;
        let img = samples
            .par_iter()
            .map(|s| self.encode_image(&s.img_features))
            .collect::<Result<Vec<_>>>()?;
        Ok((txt, img))
    }

    /// Lexical vector pooled over the chosen patches only.
    pub fn encode_patches(&self, patches: &FeatureSequence, chosen: &[usize]) -> Result<DenseLexical> {
        let z = FeatureSequence::new(self.img.forward(patches.as_mat())?)?;
        patch_lexical(&z, &self.z_img, chosen)
    }
}
