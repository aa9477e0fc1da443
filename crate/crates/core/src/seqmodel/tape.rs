//! Reverse-mode autodiff over [`Tensor`] values.
//!
//! A forward pass appends nodes to the tape; `backward` sweeps the nodes in
//! reverse, accumulating gradients into every parent. The op set is exactly
//! what the encoder-decoder needs, nothing more.

use super::tensor::Tensor;

pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Gather { table: NodeId, ids: Vec<usize> },
    MatMul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Add { a: NodeId, b: NodeId },
    AddRowBroadcast { a: NodeId, row: NodeId },
    Scale { a: NodeId, factor: f64 },
    /// Value = parent + fixed mask matrix; gradient passes through.
    AddMask { a: NodeId },
    SoftmaxRows { a: NodeId },
    Silu { a: NodeId },
    LayerNorm { x: NodeId, gain: NodeId, bias: NodeId },
    SliceCols { a: NodeId, from: usize },
    ConcatRows { parts: Vec<NodeId> },
    ConcatCols { parts: Vec<NodeId> },
    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// the logits. Rows with `include[r] == false` are excluded from the sum
    /// and the length normalizer.
    NllLoss { logits: NodeId, targets: Vec<usize>, include: Vec<bool> },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f64 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(256) }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Trainable parameter entry point.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Non-trainable input (diagram features, masks already folded in).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// Row lookup: out[r] = table[ids[r]].
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            assert!(id < t.rows, "gather index {id} out of {} rows", t.rows);
            out.data[r * t.cols..(r + 1) * t.cols].copy_from_slice(t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul { a, b })
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose { a })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(value, Op::Add { a, b })
    }

    /// a[m,n] + row[1,n] broadcast over rows.
    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(rv.rows, 1, "broadcast operand must be a single row");
        assert_eq!(av.cols, rv.cols, "broadcast width mismatch");
        let mut value = av.clone();
        for r in 0..value.rows {
            for c in 0..value.cols {
                *value.at_mut(r, c) += rv.at(0, c);
            }
        }
        self.push(value, Op::AddRowBroadcast { a, row })
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut value = self.value(a).clone();
        value.scale_assign(factor);
        self.push(value, Op::Scale { a, factor })
    }

    /// Additive attention mask: 0.0 keeps a score, -1e30 removes it.
    pub fn add_mask(&mut self, a: NodeId, mask: &Tensor) -> NodeId {
        let mut value = self.value(a).clone();
        assert!(value.same_shape(mask), "mask shape mismatch");
        value.add_assign(mask);
        self.push(value, Op::AddMask { a })
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut value = av.clone();
        for r in 0..value.rows {
            let row = &mut value.data[r * value.cols..(r + 1) * value.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows { a })
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        for v in &mut value.data {
            *v *= sigmoid(*v);
        }
        self.push(value, Op::Silu { a })
    }

    /// Row-wise layer norm with learned gain and bias (1×n each).
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        assert_eq!(gv.rows, 1);
        assert_eq!(bv.rows, 1);
        assert_eq!(gv.cols, xv.cols);
        let mut value = Tensor::zeros(xv.rows, xv.cols);
        let n = xv.cols as f64;
        for r in 0..xv.rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            for (c, &x) in row.iter().enumerate() {
                *value.at_mut(r, c) = (x - mean) * inv_std * gv.at(0, c) + bv.at(0, c);
            }
        }
        self.push(value, Op::LayerNorm { x, gain, bias })
    }

    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let av = self.value(a);
        assert!(from < to && to <= av.cols, "bad column slice {from}..{to}");
        let mut value = Tensor::zeros(av.rows, to - from);
        for r in 0..av.rows {
            value.data[r * (to - from)..(r + 1) * (to - from)]
                .copy_from_slice(&av.row(r)[from..to]);
        }
        self.push(value, Op::SliceCols { a, from })
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols;
        let rows: usize = parts.iter().map(|&p| self.value(p).rows).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols, cols, "concat_rows width mismatch");
            value.data[offset..offset + pv.numel()].copy_from_slice(&pv.data);
            offset += pv.numel();
        }
        self.push(value, Op::ConcatRows { parts: parts.to_vec() })
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut value = Tensor::zeros(rows, cols);
        let mut col_offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows, rows, "concat_cols height mismatch");
            for r in 0..rows {
                value.data[r * cols + col_offset..r * cols + col_offset + pv.cols]
                    .copy_from_slice(pv.row(r));
            }
            col_offset += pv.cols;
        }
        self.push(value, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Mean NLL over included rows; log probabilities are clamped at
    /// `ln(LOG_EPS)` so the loss stays finite.
    pub fn nll_loss(&mut self, logits: NodeId, targets: &[usize], include: &[bool]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len());
        assert_eq!(include.len(), targets.len());
        let count = include.iter().filter(|&&b| b).count().max(1);
        let mut total = 0.0;
        for (r, (&target, &inc)) in targets.iter().zip(include).enumerate() {
            if !inc {
                continue;
            }
            let p = softmax_row(lv.row(r), target);
            total -= p.max(LOG_EPS).ln();
        }
        let value = Tensor::scalar(total / count as f64);
        self.push(value, Op::NllLoss { logits, targets: targets.to_vec(), include: include.to_vec() })
    }

    /// Reverse sweep from `root` (a scalar). Returns one gradient slot per
    /// node; untouched slots stay `None`.
    pub fn backward(&self, root: NodeId) -> Vec<Option<Tensor>> {
        assert_eq!(self.value(root).numel(), 1, "backward root must be scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(grad) = grads[idx].take() else { continue };
            self.accumulate_parents(idx, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        grads
    }

    fn accumulate_parents(&self, idx: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut add_to = |target: NodeId, delta: Tensor| {
            match &mut grads[target.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let mut delta = Tensor::zeros(t.rows, t.cols);
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..t.cols {
                        *delta.at_mut(id, c) += grad.at(r, c);
                    }
                }
                add_to(*table, delta);
            }
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                add_to(*a, grad.matmul(&bv.transpose()));
                add_to(*b, av.transpose().matmul(grad));
            }
            Op::Transpose { a } => add_to(*a, grad.transpose()),
            Op::Add { a, b } => {
                add_to(*a, grad.clone());
                add_to(*b, grad.clone());
            }
            Op::AddRowBroadcast { a, row } => {
                add_to(*a, grad.clone());
                let mut row_grad = Tensor::zeros(1, grad.cols);
                for r in 0..grad.rows {
                    for c in 0..grad.cols {
                        *row_grad.at_mut(0, c) += grad.at(r, c);
                    }
                }
                add_to(*row, row_grad);
            }
            Op::Scale { a, factor } => {
                let mut delta = grad.clone();
                delta.scale_assign(*factor);
                add_to(*a, delta);
            }
            Op::AddMask { a } => add_to(*a, grad.clone()),
            Op::SoftmaxRows { a } => {
                let y = &node.value;
                let mut delta = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let dot: f64 =
                        (0..y.cols).map(|c| grad.at(r, c) * y.at(r, c)).sum();
                    for c in 0..y.cols {
                        *delta.at_mut(r, c) = y.at(r, c) * (grad.at(r, c) - dot);
                    }
                }
                add_to(*a, delta);
            }
            Op::Silu { a } => {
                let x = self.value(*a);
                let mut delta = grad.clone();
                for (d, &xv) in delta.data.iter_mut().zip(&x.data) {
                    let s = sigmoid(xv);
                    *d *= s * (1.0 + xv * (1.0 - s));
                }
                add_to(*a, delta);
            }
            Op::LayerNorm { x, gain, bias } => {
                let (xv, gv) = (self.value(*x), self.value(*gain));
                let n = xv.cols as f64;
                let mut dx = Tensor::zeros(xv.rows, xv.cols);
                let mut dgain = Tensor::zeros(1, xv.cols);
                let mut dbias = Tensor::zeros(1, xv.cols);
                for r in 0..xv.rows {
                    let row = xv.row(r);
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    let inv_std = 1.0 / (var + LN_EPS).sqrt();
                    // dxhat, then the two reduction terms of the LN backward.
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    let xhat: Vec<f64> = row.iter().map(|&v| (v - mean) * inv_std).collect();
                    let dxhat: Vec<f64> =
                        (0..xv.cols).map(|c| grad.at(r, c) * gv.at(0, c)).collect();
                    for c in 0..xv.cols {
                        sum_dxhat += dxhat[c];
                        sum_dxhat_xhat += dxhat[c] * xhat[c];
                        *dgain.at_mut(0, c) += grad.at(r, c) * xhat[c];
                        *dbias.at_mut(0, c) += grad.at(r, c);
                    }
                    for c in 0..xv.cols {
                        *dx.at_mut(r, c) = inv_std
                            * (dxhat[c] - sum_dxhat / n - xhat[c] * sum_dxhat_xhat / n);
                    }
                }
                add_to(*x, dx);
                add_to(*gain, dgain);
                add_to(*bias, dbias);
            }
            Op::SliceCols { a, from } => {
                let av = self.value(*a);
                let mut delta = Tensor::zeros(av.rows, av.cols);
                for r in 0..grad.rows {
                    for c in 0..grad.cols {
                        *delta.at_mut(r, from + c) = grad.at(r, c);
                    }
                }
                add_to(*a, delta);
            }
            Op::ConcatRows { parts } => {
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let mut delta = Tensor::zeros(pv.rows, pv.cols);
                    delta.data.copy_from_slice(&grad.data[offset..offset + pv.numel()]);
                    offset += pv.numel();
                    add_to(p, delta);
                }
            }
            Op::ConcatCols { parts } => {
                let mut col_offset = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let mut delta = Tensor::zeros(pv.rows, pv.cols);
                    for r in 0..pv.rows {
                        delta.data[r * pv.cols..(r + 1) * pv.cols].copy_from_slice(
                            &grad.row(r)[col_offset..col_offset + pv.cols],
                        );
                    }
                    col_offset += pv.cols;
                    add_to(p, delta);
                }
            }
            Op::NllLoss { logits, targets, include } => {
                let lv = self.value(*logits);
                let count = include.iter().filter(|&&b| b).count().max(1) as f64;
                let upstream = grad.at(0, 0) / count;
                let mut delta = Tensor::zeros(lv.rows, lv.cols);
                for (r, (&target, &inc)) in targets.iter().zip(include).enumerate() {
                    if !inc {
                        continue;
                    }
                    let probs = softmax_full(lv.row(r));
                    // The clamp flattens the loss where p < LOG_EPS; the
                    // gradient there is zero by construction.
                    if probs[target] <= LOG_EPS {
                        continue;
                    }
                    for (c, &p) in probs.iter().enumerate() {
                        let indicator = if c == target { 1.0 } else { 0.0 };
                        *delta.at_mut(r, c) = upstream * (p - indicator);
                    }
                }
                add_to(*logits, delta);
            }
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax_full(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn softmax_row(row: &[f64], index: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
    (row[index] - max).exp() / sum
}
