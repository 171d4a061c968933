// SPDX-License-Identifier: Apache-2.0

//! Eagerly evaluated tape. Every op computes its value when it is recorded;
//! [`Tape::backward`] then walks the nodes once in reverse order.

use crate::error::{Error, Result};
use crate::lexcore::{elu1p_derivative, elu1p_mat};
use crate::linalg::Mat;

/// Norms below this are treated as degenerate by the row normalizer.
const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Tanh(NodeId),
    Elu1p(NodeId),
    NormalizeRows {
        input: NodeId,
        norms: Vec<f64>,
    },
    MaxPool {
        input: NodeId,
        argmax: Vec<usize>,
    },
    InfoNce {
        queries: NodeId,
        keys: NodeId,
        log_inverse: NodeId,
        scale: f64,
        clamped: bool,
        sims: Mat,
        probs: Mat,
    },
    Flops(NodeId),
    Overuse(NodeId),
    SumSquares(NodeId),
    Combine(Vec<(f64, NodeId)>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulBt(..) => "matmul_bt",
            Op::AddRow(..) => "add_row",
            Op::Tanh(_) => "tanh",
            Op::Elu1p(_) => "elu1p",
            Op::NormalizeRows { .. } => "normalize_rows",
            Op::MaxPool { .. } => "max_pool",
            Op::InfoNce { .. } => "info_nce",
            Op::Flops(_) => "flops",
            Op::Overuse(_) => "overuse",
            Op::SumSquares(_) => "sum_squares",
            Op::Combine(_) => "combine",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Mat,
}

/// Recorded computation. Parameters are the leaves registered with
/// [`Tape::param`]; their gradients are what [`Tape::backward`] returns.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0]
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    /// Argmax rows chosen by every max-pool node, in recording order.
    pub fn pool_choices(&self) -> Vec<&[usize]> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::MaxPool { argmax, .. } => Some(argmax.as_slice()),
                _ => None,
            })
            .collect()
    }

    fn push(&mut self, op: Op, value: Mat) -> Result<NodeId> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::Numeric {
                node: id,
                op: op.name(),
                detail: "non-finite forward value".into(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(NodeId(id))
    }

    /// Constant input; receives no reported gradient.
    pub fn constant(&mut self, value: Mat) -> Result<NodeId> {
        self.push(Op::Leaf, value)
    }

    pub fn param(&mut self, value: Mat) -> Result<NodeId> {
        let id = self.push(Op::Leaf, value)?;
        self.params.push(id);
        Ok(id)
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_bt(self.value(b))?;
        self.push(Op::MatMulBt(a, b), v)
    }

    /// Adds the 1×c row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::DimensionMismatch {
                context: "add_row",
                expected: av.cols(),
                got: bv.cols(),
            });
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, bias), out)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn elu1p(&mut self, a: NodeId) -> Result<NodeId> {
        let v = elu1p_mat(self.value(a)).map_err(|_| Error::Numeric {
            node: a.0,
            op: "elu1p",
            detail: "non-finite input".into(),
        })?;
        self.push(Op::Elu1p(a), v)
    }

    /// Scales every row to unit ℓ2 norm.
    pub fn normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let mut out = self.value(a).clone();
        let mut norms = Vec::with_capacity(out.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < MIN_NORM {
                return Err(Error::Numeric {
                    node: self.nodes.len(),
                    op: "normalize_rows",
                    detail: format!("row {r} has norm {norm:e}"),
                });
            }
            row.iter_mut().for_each(|x| *x /= norm);
            norms.push(norm);
        }
        self.push(Op::NormalizeRows { input: a, norms }, out)
    }

    /// Column-wise max over consecutive blocks of `group` rows. Ties go to
    /// the lowest row of the block.
    pub fn max_pool(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let av = self.value(a);
        if group == 0 || av.rows() % group != 0 {
            return Err(Error::invalid(format!(
                "max_pool group {group} does not divide {} rows",
                av.rows()
            )));
        }
        let (groups, cols) = (av.rows() / group, av.cols());
        let mut out = Mat::zeros(groups, cols);
        let mut argmax = vec![0usize; groups * cols];
        for g in 0..groups {
            let base = g * group;
            let first = av.row(base);
            out.row_mut(g).copy_from_slice(first);
            for c in 0..cols {
                argmax[g * cols + c] = base;
            }
            for r in base + 1..base + group {
                for (c, &v) in av.row(r).iter().enumerate() {
                    if v > out.get(g, c) {
                        out.set(g, c, v);
                        argmax[g * cols + c] = r;
                    }
                }
            }
        }
        self.push(
            Op::MaxPool { input: a, argmax },
            out,
        )
    }

    /// Mean softmax cross-entropy of `queries·keysᵀ·min(e^θ, max_inverse)`
    /// against the diagonal, where θ is the 1×1 node `log_inverse`.
    pub fn info_nce(
        &mut self,
        queries: NodeId,
        keys: NodeId,
        log_inverse: NodeId,
        max_inverse: f64,
    ) -> Result<NodeId> {
        let (q, k) = (self.value(queries), self.value(keys));
        if q.shape() != k.shape() {
            return Err(Error::DimensionMismatch {
                context: "info_nce",
                expected: q.rows(),
                got: k.rows(),
            });
        }
        let n = q.rows();
        if n < 2 {
            return Err(Error::invalid("contrastive loss needs a batch of at least 2 pairs"));
        }
        let theta = self.scalar(log_inverse);
        let raw = theta.exp();
        let clamped = raw > max_inverse;
        let scale = raw.min(max_inverse);
        let sims = q.matmul_bt(k)?;
        let mut probs = sims.map(|s| s * scale);
        let mut loss = 0.0;
        for i in 0..n {
            let row = probs.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for p in row.iter_mut() {
                *p = (*p - max).exp();
                z += *p;
            }
            let diag_logit = sims.get(i, i) * scale;
            loss += max + z.ln() - diag_logit;
            row.iter_mut().for_each(|p| *p /= z);
        }
        let value = Mat::scalar(loss / n as f64);
        self.push(
            Op::InfoNce {
                queries,
                keys,
                log_inverse,
                scale,
                clamped,
                sims,
                probs,
            },
            value,
        )
    }

    /// `Σ_j m_j²` over column means.
    pub fn flops(&mut self, s: NodeId) -> Result<NodeId> {
        let v: f64 = self.value(s).column_means().iter().map(|m| m * m).sum();
        self.push(Op::Flops(s), Mat::scalar(v))
    }

    /// `V · Σ_j m_j³ / Σ_k m_k` over column means.
    pub fn overuse(&mut self, s: NodeId) -> Result<NodeId> {
        let means = self.value(s).column_means();
        let mass: f64 = means.iter().sum();
        if mass <= 0.0 {
            return Err(Error::Numeric {
                node: self.nodes.len(),
                op: "overuse",
                detail: "all-zero batch".into(),
            });
        }
        let cubes: f64 = means.iter().map(|m| m * m * m).sum();
        self.push(Op::Overuse(s), Mat::scalar(means.len() as f64 * cubes / mass))
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).data().iter().map(|x| x * x).sum();
        self.push(Op::SumSquares(a), Mat::scalar(v))
    }

    /// Weighted sum of scalar nodes with constant coefficients.
    pub fn combine(&mut self, terms: &[(f64, NodeId)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(w, id) in terms {
            if self.value(id).shape() != (1, 1) {
                return Err(Error::invalid("combine expects scalar nodes"));
            }
            total += w * self.scalar(id);
        }
        self.push(Op::Combine(terms.to_vec()), Mat::scalar(total))
    }

    /// Reverse sweep from the scalar `loss`. Returns one gradient per
    /// registered parameter, in registration order.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<Mat>> {
        let adj = self.adjoints(loss)?;
        Ok(self
            .params
            .iter()
            .map(|p| {
                adj[p.0]
                    .clone()
                    .unwrap_or_else(|| Mat::zeros(self.value(*p).rows(), self.value(*p).cols()))
            })
            .collect())
    }

    fn adjoints(&self, loss: NodeId) -> Result<Vec<Option<Mat>>> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::invalid("backward needs a scalar loss"));
        }
        let mut adj: Vec<Option<Mat>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(Mat::scalar(1.0));

        fn accumulate(slot: &mut Option<Mat>, g: Mat) {
            match slot {
                Some(existing) => existing.add_scaled(&g, 1.0),
                None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !g.is_finite() {
                return Err(Error::Numeric {
                    node: idx,
                    op: node.op.name(),
                    detail: "non-finite adjoint".into(),
                });
            }
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b))?;
                    let gb = self.value(*a).matmul_at(&g)?;
                    accumulate(&mut adj[a.0], ga);
                    accumulate(&mut adj[b.0], gb);
                }
                Op::MatMulBt(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.matmul_at(self.value(*a))?;
                    accumulate(&mut adj[a.0], ga);
                    accumulate(&mut adj[b.0], gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Mat::zeros(1, g.cols());
                    for row in g.iter_rows() {
                        for (o, v) in gb.data_mut().iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    accumulate(&mut adj[a.0], g);
                    accumulate(&mut adj[bias.0], gb);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    for (o, y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        *o *= 1.0 - y * y;
                    }
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Elu1p(a) => {
                    let mut ga = g;
                    for (o, x) in ga.data_mut().iter_mut().zip(self.value(*a).data()) {
                        *o *= elu1p_derivative(*x);
                    }
                    accumulate(&mut adj[a.0], ga);
                }
                Op::NormalizeRows { input, norms } => {
                    let y = &node.value;
                    let mut ga = g;
                    for (r, &norm) in norms.iter().enumerate() {
                        if norm < MIN_NORM {
                            return Err(Error::Numeric {
                                node: idx,
                                op: "normalize_rows",
                                detail: format!("row {r} norm {norm:e} in backward"),
                            });
                        }
                        let yr = y.row(r);
                        let gr = ga.row_mut(r);
                        let proj: f64 = yr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
                        for (o, &yv) in gr.iter_mut().zip(yr) {
                            *o = (*o - yv * proj) / norm;
                        }
                    }
                    accumulate(&mut adj[input.0], ga);
                }
                Op::MaxPool { input, argmax } => {
                    let src = self.value(*input);
                    let cols = src.cols();
                    let mut ga = Mat::zeros(src.rows(), cols);
                    for (k, &r) in argmax.iter().enumerate() {
                        let c = k % cols;
                        let o = ga.get(r, c) + g.data()[k];
                        ga.set(r, c, o);
                    }
                    accumulate(&mut adj[input.0], ga);
                }
                Op::InfoNce {
                    queries,
                    keys,
                    log_inverse,
                    scale,
                    clamped,
                    sims,
                    probs,
                } => {
                    let n = probs.rows();
                    let upstream = g.data()[0];
                    // d loss / d logits = (P - I) / N
                    let mut dlogits = probs.clone();
                    for i in 0..n {
                        let v = dlogits.get(i, i) - 1.0;
                        dlogits.set(i, i, v);
                    }
                    let w = upstream / n as f64;
                    dlogits.data_mut().iter_mut().for_each(|v| *v *= w);
                    let dscale: f64 = dlogits
                        .data()
                        .iter()
                        .zip(sims.data())
                        .map(|(a, b)| a * b)
                        .sum();
                    let mut dq = dlogits.matmul(self.value(*keys))?;
                    let mut dk = dlogits.matmul_at(self.value(*queries))?;
                    dq.data_mut().iter_mut().for_each(|v| *v *= scale);
                    dk.data_mut().iter_mut().for_each(|v| *v *= scale);
                    accumulate(&mut adj[queries.0], dq);
                    accumulate(&mut adj[keys.0], dk);
                    let dtheta = if *clamped { 0.0 } else { dscale * scale };
                    accumulate(&mut adj[log_inverse.0], Mat::scalar(dtheta));
                }
                Op::Flops(s) => {
                    let src = self.value(*s);
                    let means = src.column_means();
                    let w = 2.0 * g.data()[0] / src.rows() as f64;
                    let grad_row: Vec<f64> = means.iter().map(|m| w * m).collect();
                    accumulate(&mut adj[s.0], broadcast_row(&grad_row, src.rows()));
                }
                Op::Overuse(s) => {
                    let src = self.value(*s);
                    let means = src.column_means();
                    let mass: f64 = means.iter().sum();
                    let cubes: f64 = means.iter().map(|m| m * m * m).sum();
                    let v = means.len() as f64;
                    let w = g.data()[0] * v / src.rows() as f64;
                    let grad_row: Vec<f64> = means
                        .iter()
                        .map(|m| w * (3.0 * m * m / mass - cubes / (mass * mass)))
                        .collect();
                    accumulate(&mut adj[s.0], broadcast_row(&grad_row, src.rows()));
                }
                Op::SumSquares(a) => {
                    let ga = self.value(*a).map(|x| 2.0 * x * g.data()[0]);
                    accumulate(&mut adj[a.0], ga);
                }
                Op::Combine(terms) => {
                    for &(w, id) in terms {
                        accumulate(&mut adj[id.0], Mat::scalar(w * g.data()[0]));
                    }
                }
            }
        }
        Ok(adj)
    }
}

fn broadcast_row(row: &[f64], rows: usize) -> Mat {
    let mut out = Mat::zeros(rows, row.len());
    for r in 0..rows {
        out.row_mut(r).copy_from_slice(row);
    }
    out
}

/// A static computation: records the loss on a fresh tape given the
/// parameter leaves, which are registered in order before `record` runs.
pub trait Graph {
    fn record(&self, tape: &mut Tape, params: &[NodeId]) -> Result<NodeId>;
}

impl<F> Graph for F
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    fn record(&self, tape: &mut Tape, params: &[NodeId]) -> Result<NodeId> {
        self(tape, params)
    }
}

/// Records `graph` at `params` and returns the tape and loss node.
pub(crate) fn record<G: Graph + ?Sized>(graph: &G, params: &[Mat]) -> Result<(Tape, NodeId)> {
    let mut tape = Tape::new();
    let mut ids = Vec::with_capacity(params.len());
    for p in params {
        ids.push(tape.param(p.clone())?);
    }
    let loss = graph.record(&mut tape, &ids)?;
    Ok((tape, loss))
}

/// Loss value and exact reverse-mode gradients for every parameter.
pub fn forward_backward<G: Graph + ?Sized>(graph: &G, params: &[Mat]) -> Result<(f64, Vec<Mat>)> {
    let (tape, loss) = record(graph, params)?;
    let grads = tape.backward(loss)?;
    Ok((tape.scalar(loss), grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares_gradient() {
        let g = |t: &mut Tape, p: &[NodeId]| t.sum_squares(p[0]);
        let (loss, grads) = forward_backward(&g, &[Mat::row_vector(vec![1.0, 2.0])]).unwrap();
        assert_eq!(loss, 5.0);
        assert_eq!(grads[0].data(), &[2.0, 4.0]);
    }

    #[test]
    fn elu1p_gradient_on_negative_branch() {
        let g = |t: &mut Tape, p: &[NodeId]| {
            let e = t.elu1p(p[0])?;
            t.combine(&[(1.0, e)])
        };
        let (loss, grads) = forward_backward(&g, &[Mat::scalar(-1.0)]).unwrap();
        let e = (-1.0f64).exp();
        assert!((loss - e).abs() < 1e-15);
        assert!((grads[0].data()[0] - e).abs() < 1e-15);
    }

    #[test]
    fn nan_forward_names_the_node() {
        let g = |t: &mut Tape, p: &[NodeId]| {
            let x = t.constant(Mat::scalar(f64::NAN))?;
            let s = t.matmul(p[0], x)?;
            t.sum_squares(s)
        };
        match forward_backward(&g, &[Mat::scalar(1.0)]) {
            Err(Error::Numeric { op, .. }) => assert_eq!(op, "leaf"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn normalize_gradient_is_orthogonal_to_input() {
        // For y = x/|x|, the Jacobian satisfies J·x = 0, so any upstream
        // gradient pulled back through it is orthogonal to x.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = random(&mut rng, 1, 6);
            let w = random(&mut rng, 6, 1);
            let g = |t: &mut Tape, p: &[NodeId]| {
                let y = t.normalize_rows(p[0])?;
                let wn = t.constant(w.clone())?;
                let proj = t.matmul(y, wn)?;
                t.sum_squares(proj)
            };
            let (_, grads) = forward_backward(&g, &[x.clone()]).unwrap();
            let dot = crate::linalg::dot(grads[0].data(), x.data());
            assert!(dot.abs() < 1e-12, "{dot}");
        }
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let g = |t: &mut Tape, p: &[NodeId]| {
            let y = t.normalize_rows(p[0])?;
            t.sum_squares(y)
        };
        assert!(matches!(
            forward_backward(&g, &[Mat::zeros(1, 3)]),
            Err(Error::Numeric { op: "normalize_rows", .. })
        ));
    }

    #[test]
    fn max_pool_routes_each_column_to_one_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&mut rng, 6, 4);
        let up = random(&mut rng, 2, 4);
        let g = |t: &mut Tape, p: &[NodeId]| {
            let m = t.max_pool(p[0], 3)?;
            let w = t.constant(up.clone())?;
            let mw = t.matmul_bt(m, w)?;
            t.sum_squares(mw)
        };
        let (tape, loss) = record(&g, &[x.clone()]).unwrap();
        let grads = tape.backward(loss).unwrap();
        let pooled = tape.value(NodeId(1)).clone();
        // Gradient arriving at the pooled output: d/dm Σ(m·wᵀ)² = 2(m·wᵀ)·w.
        let gp = tape.value(NodeId(3)).matmul(&up).unwrap().map(|v| 2.0 * v);
        for c in 0..4 {
            for grp in 0..2 {
                let rows: Vec<usize> = (grp * 3..grp * 3 + 3)
                    .filter(|&r| grads[0].get(r, c) != 0.0)
                    .collect();
                assert!(rows.len() <= 1);
                let mass: f64 = (grp * 3..grp * 3 + 3).map(|r| grads[0].get(r, c)).sum();
                assert!((mass - gp.get(grp, c)).abs() < 1e-15);
                if let Some(&r) = rows.first() {
                    assert_eq!(x.get(r, c), pooled.get(grp, c));
                }
            }
        }
    }

    #[test]
    fn max_pool_tie_goes_to_lowest_row() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let g = |t: &mut Tape, p: &[NodeId]| {
            let m = t.max_pool(p[0], 2)?;
            t.sum_squares(m)
        };
        let (_, grads) = forward_backward(&g, &[x]).unwrap();
        assert_eq!(grads[0].row(0), &[2.0, 0.0]);
        assert_eq!(grads[0].row(1), &[0.0, 4.0]);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = random(&mut rng, 5, 4);
        let b = random(&mut rng, 4, 3);
        let g = |t: &mut Tape, p: &[NodeId]| {
            let m = t.matmul(p[0], p[1])?;
            let e = t.elu1p(m)?;
            let n = t.normalize_rows(e)?;
            let o = t.overuse(n)?;
            let f = t.flops(n)?;
            t.combine(&[(0.5, o), (2.0, f)])
        };
        let first = forward_backward(&g, &[a.clone(), b.clone()]).unwrap();
        let second = forward_backward(&g, &[a, b]).unwrap();
        assert_eq!(first.0.to_bits(), second.0.to_bits());
        assert_eq!(first.1, second.1);
    }

    #[test]
    fn clamped_temperature_receives_no_gradient() {
        let q = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let g = |t: &mut Tape, p: &[NodeId]| {
            let a = t.constant(q.clone())?;
            t.info_nce(a, a, p[0], 100.0)
        };
        let (_, grads) = forward_backward(&g, &[Mat::scalar(10.0)]).unwrap();
        assert_eq!(grads[0].data()[0], 0.0);
        let (_, grads) = forward_backward(&g, &[Mat::scalar(1.0)]).unwrap();
        assert!(grads[0].data()[0] < 0.0);
    }
}
