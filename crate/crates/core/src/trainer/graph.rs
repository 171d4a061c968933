// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gradcore::{Graph, NodeId, Tape};
use crate::linalg::Mat;
use crate::losses::PenaltyKind;
use crate::synth::stream_rng;

/// Node handles of one recorded training objective.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveNodes {
    pub s_txt: NodeId,
    pub s_img: NodeId,
    pub l_t2i: NodeId,
    pub l_i2t: NodeId,
    pub pen_img: NodeId,
    pub pen_txt: NodeId,
    pub loss: NodeId,
}

/// One batch of the training objective over the flat parameter list of
/// [`super::PARAM_NAMES`]. Image rows are grouped `patches` at a time.
#[derive(Debug, Clone)]
pub struct ObjectiveGraph {
    pub x_txt: Mat,
    pub x_img: Mat,
    pub patches: usize,
    pub kind: PenaltyKind,
    pub lambda_img: f64,
    pub lambda_txt: f64,
    pub max_inverse: f64,
}

impl Graph for ObjectiveGraph {
    fn record(&self, tape: &mut Tape, params: &[NodeId]) -> Result<NodeId> {
        Ok(record_objective(self, tape, params)?.loss)
    }
}

fn project(tape: &mut Tape, x: NodeId, p: &[NodeId]) -> Result<NodeId> {
    let h = tape.matmul(x, p[0])?;
    let h = tape.add_row(h, p[1])?;
    let h = tape.tanh(h)?;
    let z = tape.matmul(h, p[2])?;
    tape.add_row(z, p[3])
}

pub fn record_objective(g: &ObjectiveGraph, tape: &mut Tape, params: &[NodeId]) -> Result<ObjectiveNodes> {
    if params.len() != super::PARAM_NAMES.len() {
        return Err(Error::invalid(format!(
            "objective expects {} parameters, got {}",
            super::PARAM_NAMES.len(),
            params.len()
        )));
    }
    let x_txt = tape.constant(g.x_txt.clone())?;
    let x_img = tape.constant(g.x_img.clone())?;

    let z_t = project(tape, x_txt, &params[0..4])?;
    let a_t = tape.matmul_bt(z_t, params[8])?;
    let e_t = tape.elu1p(a_t)?;
    let s_txt = tape.normalize_rows(e_t)?;

    let z_i = project(tape, x_img, &params[4..8])?;
    let a_i = tape.matmul_bt(z_i, params[9])?;
    let e_i = tape.elu1p(a_i)?;
    let m_i = tape.max_pool(e_i, g.patches)?;
    let s_img = tape.normalize_rows(m_i)?;

    let l_t2i = tape.info_nce(s_txt, s_img, params[10], g.max_inverse)?;
    let l_i2t = tape.info_nce(s_img, s_txt, params[10], g.max_inverse)?;
    let (pen_img, pen_txt, li, lt) = match g.kind {
        PenaltyKind::Flops => (tape.flops(s_img)?, tape.flops(s_txt)?, g.lambda_img, g.lambda_txt),
        PenaltyKind::Overuse => (tape.overuse(s_img)?, tape.overuse(s_txt)?, g.lambda_img, g.lambda_txt),
        PenaltyKind::None => (tape.overuse(s_img)?, tape.overuse(s_txt)?, 0.0, 0.0),
    };
    let loss = tape.combine(&[(1.0, l_t2i), (1.0, l_i2t), (li, pen_img), (lt, pen_txt)])?;
    Ok(ObjectiveNodes {
        s_txt,
        s_img,
        l_t2i,
        l_i2t,
        pen_img,
        pen_txt,
        loss,
    })
}

/// Small random instance of the full objective (4 pairs, V = 16, d = 8,
/// 4 patches per image) for gradient checking.
pub fn gradcheck_instance(seed: u64, kind: PenaltyKind) -> (ObjectiveGraph, Vec<Mat>) {
    const N: usize = 4;
    const V: usize = 16;
    const D: usize = 8;
    const H: usize = 6;
    const D_TXT: usize = 5;
    const D_IMG: usize = 7;
    const PATCHES: usize = 4;
    let mut rng = stream_rng(seed, 0x6772_6164);
    let mut g = |r: usize, c: usize, std: f64| {
        let data = (0..r * c).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect();
        Mat::from_vec(r, c, data).expect("shape matches")
    };
    let graph = ObjectiveGraph {
        x_txt: g(N, D_TXT, 1.0),
        x_img: g(N * PATCHES, D_IMG, 1.0),
        patches: PATCHES,
        kind,
        lambda_img: 0.3,
        lambda_txt: 0.7,
        max_inverse: 100.0,
    };
    let z = g(V, D, 0.5);
    let params = vec![
        g(D_TXT, H, 0.5),
        g(1, H, 0.1),
        g(H, D, 0.5),
        g(1, D, 0.1),
        g(D_IMG, H, 0.5),
        g(1, H, 0.1),
        g(H, D, 0.5),
        g(1, D, 0.1),
        z.clone(),
        z,
        Mat::scalar((1.0f64 / 0.07).ln()),
    ];
    (graph, params)
}
