// SPDX-License-Identifier: Apache-2.0

//! Zero-shot patch classification scored by mIoU.
//!
//! Each class is named by one vocabulary token. Its embedding is the text
//! encoder applied to that token's text feature; each patch is classified
//! by its single-patch lexical vector.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lexcore::{patch_lexical, DenseLexical, FeatureSequence};
use crate::linalg::Mat;
use crate::synth::{stream_rng, ModalityMaps, PatchScene};
use crate::trainer::EncoderParams;

pub const REPORT_HEADER: &str =
    "# per-scene mIoU over classes with a non-empty union, then the mean over scenes";
pub const REPORT_COLUMNS: &str = "class_id,iou,support_patches";

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingSet {
    pub tokens: Vec<u32>,
    pub embeddings: Vec<DenseLexical>,
}

impl ClassEmbeddingSet {
    pub fn new(tokens: Vec<u32>, embeddings: Vec<DenseLexical>) -> Result<Self> {
        if tokens.len() < 2 || tokens.len() != embeddings.len() {
            return Err(Error::invalid("need at least two classes, one embedding each"));
        }
        let v = embeddings[0].vocab_size();
        if embeddings.iter().any(|e| e.vocab_size() != v) {
            return Err(Error::invalid("class embeddings disagree on vocabulary size"));
        }
        Ok(Self { tokens, embeddings })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Encodes each class token's text feature. Duplicate or out-of-vocabulary
/// tokens are errors.
pub fn class_embeddings(
    params: &EncoderParams,
    maps: &ModalityMaps,
    tokens: &[u32],
) -> Result<ClassEmbeddingSet> {
    let v = maps.vocab_size();
    let mut seen = HashSet::new();
    for &t in tokens {
        if t as usize >= v {
            return Err(Error::invalid(format!("unknown class token {t} (vocabulary {v})")));
        }
        if !seen.insert(t) {
            return Err(Error::invalid(format!("duplicate class token {t}")));
        }
    }
    let rows: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
    let feats = maps.txt.select_rows(&rows);
    let emb = params.encode_text(&feats)?;
    ClassEmbeddingSet::new(tokens.to_vec(), emb)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPrediction {
    pub grid: usize,
    pub labels: Vec<usize>,
}

/// Class of the highest dot product for each patch; ties go to the lowest
/// class id.
pub fn argmax_classes(patches: &[DenseLexical], classes: &ClassEmbeddingSet) -> Vec<usize> {
    patches
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (c, e) in classes.embeddings.iter().enumerate() {
                let s = p.dot(e);
                if s > best_score {
                    best = c;
                    best_score = s;
                }
            }
            best
        })
        .collect()
}

pub fn classify_patches(
    params: &EncoderParams,
    scene: &PatchScene,
    classes: &ClassEmbeddingSet,
) -> Result<PatchPrediction> {
    if scene.features.len() != scene.num_patches() {
        return Err(Error::DimensionMismatch {
            context: "scene patches",
            expected: scene.num_patches(),
            got: scene.features.len(),
        });
    }
    let z = FeatureSequence::new(params.img.forward(scene.features.as_mat())?)?;
    let lex = (0..z.len())
        .map(|p| patch_lexical(&z, &params.z_img, &[p]))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchPrediction {
        grid: scene.grid,
        labels: argmax_classes(&lex, classes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassIou {
    pub class_id: usize,
    /// `None` when the class is absent from both prediction and truth.
    pub iou: Option<f64>,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiouReport {
    pub per_class: Vec<ClassIou>,
    pub miou: f64,
}

/// Per-class IoU over patch sets. The mean runs over classes whose union is
/// non-empty; a class absent from both sides is never counted.
pub fn miou(pred: &[usize], gt: &[usize], num_classes: usize) -> Result<MiouReport> {
    if pred.len() != gt.len() {
        return Err(Error::DimensionMismatch {
            context: "mIoU grid",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::invalid("mIoU needs at least one patch"));
    }
    let mut inter = vec![0usize; num_classes];
    let mut p_count = vec![0usize; num_classes];
    let mut g_count = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        if p >= num_classes || g >= num_classes {
            return Err(Error::invalid(format!(
                "class id out of range for {num_classes} classes"
            )));
        }
        p_count[p] += 1;
        g_count[g] += 1;
        if p == g {
            inter[p] += 1;
        }
    }
    let per_class: Vec<ClassIou> = (0..num_classes)
        .map(|c| {
            let union = p_count[c] + g_count[c] - inter[c];
            ClassIou {
                class_id: c,
                iou: (union > 0).then(|| inter[c] as f64 / union as f64),
                support: g_count[c],
            }
        })
        .collect();
    let counted: Vec<f64> = per_class.iter().filter_map(|c| c.iou).collect();
    let miou = counted.iter().sum::<f64>() / counted.len() as f64;
    Ok(MiouReport { per_class, miou })
}

pub fn scene_miou(pred: &PatchPrediction, scene: &PatchScene) -> Result<MiouReport> {
    if pred.grid != scene.grid {
        return Err(Error::DimensionMismatch {
            context: "mIoU grid",
            expected: scene.grid,
            got: pred.grid,
        });
    }
    miou(&pred.labels, &scene.labels, scene.num_classes())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRow {
    pub class_id: usize,
    /// Mean IoU over the scenes where the class is counted.
    pub iou: f64,
    pub support_patches: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchDisReport {
    pub per_class: Vec<ClassRow>,
    pub miou: f64,
    pub accuracy: f64,
    pub scene_mious: Vec<f64>,
}

impl PatchDisReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_HEADER}\n{REPORT_COLUMNS}\n");
        for r in &self.per_class {
            s.push_str(&format!("{},{},{}\n", r.class_id, r.iou, r.support_patches));
        }
        let support: usize = self.per_class.iter().map(|r| r.support_patches).sum();
        s.push_str(&format!("mIoU,{},{}\n", self.miou, support));
        s
    }
}

/// Folds per-scene reports in scene order.
fn aggregate(reports: &[(MiouReport, usize, usize)]) -> Result<PatchDisReport> {
    if reports.is_empty() {
        return Err(Error::invalid("empty scene set"));
    }
    let classes = reports.iter().map(|r| r.0.per_class.len()).max().unwrap_or(0);
    let mut sum = vec![0.0; classes];
    let mut n = vec![0usize; classes];
    let mut support = vec![0usize; classes];
    let (mut correct, mut total) = (0usize, 0usize);
    for (rep, c, t) in reports {
        for ci in &rep.per_class {
            if let Some(iou) = ci.iou {
                sum[ci.class_id] += iou;
                n[ci.class_id] += 1;
            }
            support[ci.class_id] += ci.support;
        }
        correct += c;
        total += t;
    }
    let scene_mious: Vec<f64> = reports.iter().map(|r| r.0.miou).collect();
    Ok(PatchDisReport {
        per_class: (0..classes)
            .filter(|&c| n[c] > 0)
            .map(|c| ClassRow {
                class_id: c,
                iou: sum[c] / n[c] as f64,
                support_patches: support[c],
            })
            .collect(),
        miou: scene_mious.iter().sum::<f64>() / scene_mious.len() as f64,
        accuracy: correct as f64 / total as f64,
        scene_mious,
    })
}

pub fn eval_patchdis(
    params: &EncoderParams,
    maps: &ModalityMaps,
    scenes: &[PatchScene],
) -> Result<PatchDisReport> {
    if scenes.is_empty() {
        return Err(Error::invalid("empty scene set"));
    }
    let reports = scenes
        .par_iter()
        .map(|scene| {
            let classes = class_embeddings(params, maps, &scene.class_tokens)?;
            let pred = classify_patches(params, scene, &classes)?;
            let correct = pred.labels.iter().zip(&scene.labels).filter(|(a, b)| a == b).count();
            Ok((scene_miou(&pred, scene)?, correct, pred.labels.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate(&reports)
}

/// Expected mIoU of uniformly random patch labels over the scene set,
/// estimated with `trials` draws per scene.
pub fn random_baseline(scenes: &[PatchScene], trials: usize, seed: u64) -> Result<f64> {
    if scenes.is_empty() || trials == 0 {
        return Err(Error::invalid("random baseline needs scenes and at least one trial"));
    }
    let per_scene = scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let mut rng = stream_rng(seed, i as u64);
            let c = scene.num_classes();
            let mut acc = 0.0;
            for _ in 0..trials {
                let pred: Vec<usize> = (0..scene.labels.len()).map(|_| rng.gen_range(0..c)).collect();
                acc += miou(&pred, &scene.labels, c)?.miou;
            }
            Ok(acc / trials as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_scene.iter().sum::<f64>() / per_scene.len() as f64)
}

/// Single-patch lexical vectors of a scene under `params`, for inspection.
pub fn scene_patch_lexicals(params: &EncoderParams, features: &Mat) -> Result<Vec<DenseLexical>> {
    let z = FeatureSequence::new(params.img.forward(features)?)?;
    (0..z.len()).map(|p| patch_lexical(&z, &params.z_img, &[p])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> DenseLexical {
        DenseLexical::normalize(v).unwrap()
    }

    #[test]
    fn hand_counted_miou() {
        let r = miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.per_class[0].iou, Some(0.5));
        assert!((r.per_class[1].iou.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.miou - 0.583_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        assert_eq!(miou(&[0, 1, 0, 1], &[0, 1, 0, 1], 2).unwrap().miou, 1.0);
    }

    #[test]
    fn absent_classes_are_excluded_not_counted_as_one() {
        let r = miou(&[0, 0, 1, 1], &[0, 0, 0, 1], 4).unwrap();
        assert_eq!(r.per_class[2].iou, None);
        assert_eq!(r.per_class[3].iou, None);
        assert!((r.miou - (2.0 / 3.0 + 0.5) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        assert!(miou(&[0, 1], &[0, 1, 1], 2).is_err());
    }

    #[test]
    fn argmax_picks_matching_class_and_breaks_ties_low() {
        let classes = ClassEmbeddingSet::new(
            vec![3, 7],
            vec![unit(&[1.0, 0.0, 0.0]), unit(&[0.0, 1.0, 0.0])],
        )
        .unwrap();
        let patches = vec![unit(&[0.0, 1.0, 0.0]), unit(&[0.0, 0.0, 1.0]), unit(&[1.0, 1.0, 0.0])];
        assert_eq!(argmax_classes(&patches, &classes), vec![1, 0, 0]);
    }

    #[test]
    fn report_csv_ends_with_miou_row() {
        let rep = aggregate(&[(miou(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap(), 3, 4)]).unwrap();
        let csv = rep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], REPORT_COLUMNS);
        assert_eq!(lines[2], "0,0.5,2");
        assert!(lines[4].starts_with("mIoU,0.58333"));
        assert_eq!(rep.accuracy, 0.75);
        assert!(aggregate(&[]).is_err());
    }
}
