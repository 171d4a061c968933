// SPDX-License-Identifier: Apache-2.0

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexcore::FeatureSequence;
use crate::linalg::{l2_norm, Mat};
use crate::synth::ModalityMaps;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub classes: usize,
    pub grid: usize,
    /// Minimum pairwise distance between class feature centers.
    pub separation: f64,
    pub noise_sigma: f64,
    /// Token weight written into each patch's feature.
    pub amplitude: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            grid: 8,
            separation: 0.5,
            noise_sigma: 0.05,
            amplitude: 0.7,
        }
    }
}

/// A g×g grid of labelled patches. Class c is named by vocabulary token
/// `class_tokens[c]`; its patches are noisy copies of that token's image
/// feature direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScene {
    pub id: u64,
    pub grid: usize,
    /// Row-major class id per patch.
    pub labels: Vec<usize>,
    pub class_tokens: Vec<u32>,
    pub features: FeatureSequence,
    pub min_center_distance: f64,
    /// Set when no separation was requested, so centers may coincide.
    pub degenerate: bool,
}

impl PatchScene {
    pub fn num_classes(&self) -> usize {
        self.class_tokens.len()
    }

    pub fn num_patches(&self) -> usize {
        self.grid * self.grid
    }
}

fn layout(classes: usize, grid: usize, rng: &mut impl Rng) -> Vec<usize> {
    if classes <= grid {
        // Vertical strips of (near) equal width.
        return (0..grid * grid)
            .map(|p| (p % grid) * classes / grid)
            .collect();
    }
    // Voronoi regions around distinct random seed cells; each seed owns its
    // own cell, so every class appears.
    let seeds = sample(rng, grid * grid, classes).into_vec();
    (0..grid * grid)
        .map(|p| {
            let (r, c) = ((p / grid) as i64, (p % grid) as i64);
            (0..classes)
                .min_by_key(|&k| {
                    let (sr, sc) = ((seeds[k] / grid) as i64, (seeds[k] % grid) as i64);
                    ((r - sr).pow(2) + (c - sc).pow(2), k)
                })
                .expect("classes ≥ 2")
        })
        .collect()
}

pub fn gen_patch_scene(
    maps: &ModalityMaps,
    config: &SceneConfig,
    id: u64,
    rng: &mut impl Rng,
) -> Result<PatchScene> {
    let SceneConfig {
        classes,
        grid,
        separation,
        noise_sigma,
        amplitude,
    } = *config;
    if classes < 2 {
        return Err(Error::invalid(format!("scene needs ≥ 2 classes, got {classes}")));
    }
    if grid * grid < classes {
        return Err(Error::invalid(format!(
            "{grid}×{grid} grid cannot hold {classes} classes"
        )));
    }
    if classes > maps.vocab_size() {
        return Err(Error::invalid("more classes than vocabulary tokens"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::invalid(format!("separation must be ≥ 0, got {separation}")));
    }
    if !(noise_sigma >= 0.0 && amplitude > 0.0) {
        return Err(Error::invalid("scene noise must be ≥ 0 and amplitude > 0"));
    }

    let center = |t: u32| -> Vec<f64> {
        maps.img.row(t as usize).iter().map(|v| v * amplitude).collect()
    };
    let min_distance = |toks: &[u32]| -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..toks.len() {
            for j in i + 1..toks.len() {
                let (a, b) = (center(toks[i]), center(toks[j]));
                let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                best = best.min(l2_norm(&diff));
            }
        }
        best
    };

    let mut chosen = None;
    for _ in 0..1000 {
        let toks: Vec<u32> = sample(rng, maps.vocab_size(), classes)
            .into_iter()
            .map(|t| t as u32)
            .collect();
        let dist = min_distance(&toks);
        if dist >= separation {
            chosen = Some((toks, dist));
            break;
        }
    }
    let Some((class_tokens, min_center_distance)) = chosen else {
        return Err(Error::invalid(format!(
            "no class tokens found with center separation ≥ {separation}"
        )));
    };

    let labels = layout(classes, grid, rng);
    let d = maps.img.cols();
    let mut features = Mat::zeros(grid * grid, d);
    let normal = (noise_sigma > 0.0)
        .then(|| Normal::new(0.0, noise_sigma).expect("validated sigma"));
    for (p, &label) in labels.iter().enumerate() {
        let c = center(class_tokens[label]);
        let row = features.row_mut(p);
        for (o, v) in row.iter_mut().zip(c) {
            *o = v + normal.map_or(0.0, |n| n.sample(rng));
        }
    }

    Ok(PatchScene {
        id,
        grid,
        labels,
        class_tokens,
        features: FeatureSequence::new(features)?,
        min_center_distance,
        degenerate: separation == 0.0,
    })
}
