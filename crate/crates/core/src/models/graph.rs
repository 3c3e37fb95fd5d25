//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records one forward pass; [`Graph::backward`] returns exact
//! gradients for every parameter of the borrowed [`ParamSet`]. Nodes built
//! only from inputs are never differentiated.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tensor::{dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Total number of scalars.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

pub type NodeId = usize;

enum Op {
    Input,
    Param(usize),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MulConst(NodeId, Vec<f64>),
    RowScale(NodeId, Vec<f64>),
    Affine(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Gelu(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Rows(NodeId, Vec<usize>),
    ShiftRows {
        src: NodeId,
        block: usize,
        offset: isize,
    },
    LayerNorm {
        src: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        block: usize,
        heads: usize,
        mask: Vec<bool>,
        probs: Vec<f64>,
    },
    MaskedMaxPool {
        src: NodeId,
        argmax: Vec<usize>,
    },
    WeightedBce {
        logits: NodeId,
        labels: Vec<f64>,
        pos_weight: f64,
        sig: Vec<f64>,
    },
    SumAll(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

const LN_EPS: f64 = 1e-5;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    cdf + x * pdf
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, NodeId>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    /// Parameter leaf looked up by name. Panics on an unknown name.
    pub fn param_named(&mut self, name: &str) -> NodeId {
        let id = self
            .params
            .find(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(id)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.nodes.len() - 1
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    /// Constant leaf.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Parameter leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id.0) {
            return n;
        }
        let value = self.params.get(id).clone();
        let n = self.push(value, Op::Param(id.0), true);
        self.param_nodes.insert(id.0, n);
        n
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let ng = self.ng(&[a, b]);
        self.push(v, Op::MatMul(a, b), ng)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_bias(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((1, x.cols), b.shape(), "bias shape");
        let mut v = x.clone();
        for r in 0..v.rows {
            for (o, &bb) in v.row_mut(r).iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        let ng = self.ng(&[a, bias]);
        self.push(v, Op::AddBias(a, bias), ng)
    }

    fn zip(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Tensor::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect(),
        )
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |p, q| p + q);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |p, q| p - q);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.zip(a, b, |p, q| p * q);
        let ng = self.ng(&[a, b]);
        self.push(v, Op::Mul(a, b), ng)
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&mut self, a: NodeId, c: Vec<f64>) -> NodeId {
        let x = self.value(a);
        assert_eq!(x.len(), c.len());
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&c).map(|(p, q)| p * q).collect());
        let ng = self.ng(&[a]);
        self.push(v, Op::MulConst(a, c), ng)
    }

    /// Multiplies row `r` by `scale[r]`.
    pub fn row_scale(&mut self, a: NodeId, scale: Vec<f64>) -> NodeId {
        let mut v = self.value(a).clone();
        assert_eq!(v.rows, scale.len());
        for (r, &s) in scale.iter().enumerate() {
            v.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        let ng = self.ng(&[a]);
        self.push(v, Op::RowScale(a, scale), ng)
    }

    /// `s * a + c`.
    pub fn affine(&mut self, a: NodeId, s: f64, c: f64) -> NodeId {
        let v = self.value(a).map(|x| s * x + c);
        let ng = self.ng(&[a]);
        self.push(v, Op::Affine(a, s), ng)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        let ng = self.ng(&[a]);
        self.push(v, Op::Tanh(a), ng)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        let ng = self.ng(&[a]);
        self.push(v, Op::Sigmoid(a), ng)
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(gelu);
        let ng = self.ng(&[a]);
        self.push(v, Op::Gelu(a), ng)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let x = self.value(p);
                assert_eq!(x.rows, rows, "concat_cols row mismatch");
                v.data[r * cols + off..r * cols + off + x.cols].copy_from_slice(x.row(r));
                off += x.cols;
            }
        }
        let ng = self.ng(parts);
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, width: usize) -> NodeId {
        let x = self.value(a);
        assert!(start + width <= x.cols);
        let mut v = Tensor::zeros(x.rows, width);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + width]);
        }
        let ng = self.ng(&[a]);
        self.push(v, Op::SliceCols(a, start), ng)
    }

    /// Output row `i` is row `index[i]` of `a` (gather / embedding lookup).
    pub fn rows(&mut self, a: NodeId, index: Vec<usize>) -> NodeId {
        let x = self.value(a);
        let mut v = Tensor::zeros(index.len(), x.cols);
        for (i, &r) in index.iter().enumerate() {
            v.row_mut(i).copy_from_slice(x.row(r));
        }
        let ng = self.ng(&[a]);
        self.push(v, Op::Rows(a, index), ng)
    }

    /// Within consecutive blocks of `block` rows, output row `t` is input row
    /// `t + offset` of the same block, or zero outside it.
    pub fn shift_rows(&mut self, src: NodeId, block: usize, offset: isize) -> NodeId {
        let x = self.value(src);
        assert_eq!(x.rows % block, 0);
        let mut v = Tensor::zeros(x.rows, x.cols);
        for b in 0..x.rows / block {
            for t in 0..block {
                let s = t as isize + offset;
                if (0..block as isize).contains(&s) {
                    v.row_mut(b * block + t)
                        .copy_from_slice(x.row(b * block + s as usize));
                }
            }
        }
        let ng = self.ng(&[src]);
        self.push(v, Op::ShiftRows { src, block, offset }, ng)
    }

    /// Row-wise layer normalization with learned `1 x n` scale and shift.
    pub fn layer_norm(&mut self, src: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let x = self.value(src);
        let (g, b) = (self.value(gamma), self.value(beta));
        let n = x.cols;
        let mut v = Tensor::zeros(x.rows, n);
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; x.rows];
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|&y| (y - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                let h = (row[c] - mean) * inv;
                xhat[r * n + c] = h;
                v.data[r * n + c] = g.data[c] * h + b.data[c];
            }
        }
        let ng = self.ng(&[src, gamma, beta]);
        self.push(
            v,
            Op::LayerNorm {
                src,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    /// Multi-head scaled dot-product attention within blocks of `block` rows.
    /// Keys with `mask == false` receive exactly zero weight.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        block: usize,
        heads: usize,
        mask: Vec<bool>,
    ) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, width) = qv.shape();
        assert_eq!(width % heads, 0, "width must divide into heads");
        assert_eq!(rows % block, 0);
        assert_eq!(mask.len(), rows);
        let dh = width / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let n_blocks = rows / block;
        let mut out = Tensor::zeros(rows, width);
        let mut probs = vec![0.0; n_blocks * heads * block * block];
        for b in 0..n_blocks {
            for h in 0..heads {
                let cols = h * dh..(h + 1) * dh;
                for i in 0..block {
                    let qi = &qv.row(b * block + i)[cols.clone()];
                    let p = &mut probs[((b * heads + h) * block + i) * block..][..block];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..block {
                        if mask[b * block + j] {
                            let s = dot(qi, &kv.row(b * block + j)[cols.clone()]) * scale;
                            p[j] = s;
                            max = max.max(s);
                        }
                    }
                    let mut total = 0.0;
                    for j in 0..block {
                        if mask[b * block + j] {
                            p[j] = (p[j] - max).exp();
                            total += p[j];
                        } else {
                            p[j] = 0.0;
                        }
                    }
                    if total > 0.0 {
                        p.iter_mut().for_each(|x| *x /= total);
                    }
                    let orow = &mut out.data[(b * block + i) * width..][cols.clone()];
                    for j in 0..block {
                        if p[j] != 0.0 {
                            let vj = &vv.row(b * block + j)[cols.clone()];
                            for (o, &x) in orow.iter_mut().zip(vj) {
                                *o += p[j] * x;
                            }
                        }
                    }
                }
            }
        }
        let ng = self.ng(&[q, k, v]);
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                block,
                heads,
                mask,
                probs,
            },
            ng,
        )
    }

    /// Column-wise max over the rows of each block whose mask is set.
    /// Every block needs at least one unmasked row.
    pub fn masked_max_pool(&mut self, src: NodeId, block: usize, mask: &[bool]) -> NodeId {
        let x = self.value(src);
        assert_eq!(x.rows % block, 0);
        let n_blocks = x.rows / block;
        let c = x.cols;
        let mut v = Tensor::zeros(n_blocks, c);
        let mut argmax = vec![usize::MAX; n_blocks * c];
        for b in 0..n_blocks {
            for t in 0..block {
                let r = b * block + t;
                if !mask[r] {
                    continue;
                }
                for (j, &val) in x.row(r).iter().enumerate() {
                    let slot = b * c + j;
                    if argmax[slot] == usize::MAX || val > v.data[slot] {
                        v.data[slot] = val;
                        argmax[slot] = r;
                    }
                }
            }
            assert!(argmax[b * c] != usize::MAX || c == 0, "block {b} is fully masked");
        }
        let ng = self.ng(&[src]);
        self.push(v, Op::MaskedMaxPool { src, argmax }, ng)
    }

    /// Mean of `-[w y log s(z) + (1 - y) log(1 - s(z))]` over a `B x 1` logit
    /// column.
    pub fn weighted_bce(&mut self, logits: NodeId, labels: Vec<f64>, pos_weight: f64) -> NodeId {
        let z = self.value(logits);
        assert_eq!(z.len(), labels.len());
        let n = labels.len() as f64;
        let loss = z
            .data
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z))
            .sum::<f64>()
            / n;
        let sig = z.data.iter().map(|&x| sigmoid(x)).collect();
        let ng = self.ng(&[logits]);
        self.push(
            Tensor::row_vector(vec![loss]),
            Op::WeightedBce {
                logits,
                labels,
                pos_weight,
                sig,
            },
            ng,
        )
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data.iter().sum();
        let ng = self.ng(&[a]);
        self.push(Tensor::row_vector(vec![s]), Op::SumAll(a), ng)
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    /// Parameters not reached by the graph get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Vec<Tensor> {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Tensor::row_vector(vec![1.0]));
        let mut out: Vec<Tensor> = self
            .params
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.rows, t.cols))
            .collect();

        for id in (0..=loss).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let acc = |grads: &mut Vec<Option<Tensor>>, target: NodeId, t: Tensor| {
                if !self.nodes[target].needs_grad {
                    return;
                }
                match &mut grads[target] {
                    Some(existing) => existing.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            };
            let wants = |n: NodeId| self.nodes[n].needs_grad;
            match &node.op {
                Op::Input => {}
                Op::Param(p) => out[*p].add_assign(&g),
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        acc(&mut grads, *a, g.matmul_nt(self.value(*b)));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, self.value(*a).matmul_tn(&g));
                    }
                }
                Op::AddBias(a, bias) => {
                    if wants(*bias) {
                        let mut db = Tensor::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, &x) in db.data.iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        acc(&mut grads, *bias, db);
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if wants(*a) {
                        acc(&mut grads, *a, elementwise(&g, bv, |x, y| x * y));
                    }
                    if wants(*b) {
                        acc(&mut grads, *b, elementwise(&g, av, |x, y| x * y));
                    }
                }
                Op::MulConst(a, c) => {
                    let d = g.data.iter().zip(c).map(|(x, y)| x * y).collect();
                    acc(&mut grads, *a, Tensor::from_vec(g.rows, g.cols, d));
                }
                Op::RowScale(a, s) => {
                    let mut d = g;
                    for (r, &k) in s.iter().enumerate() {
                        d.row_mut(r).iter_mut().for_each(|x| *x *= k);
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Affine(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let d = elementwise(&g, &node.value, |x, y| x * (1.0 - y * y));
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = elementwise(&g, &node.value, |x, y| x * y * (1.0 - y));
                    acc(&mut grads, *a, d);
                }
                Op::Gelu(a) => {
                    let d = elementwise(&g, self.value(*a), |x, y| x * gelu_grad(y));
                    acc(&mut grads, *a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols;
                        if wants(p) {
                            let mut d = Tensor::zeros(g.rows, w);
                            for r in 0..g.rows {
                                d.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                            }
                            acc(&mut grads, p, d);
                        }
                        off += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, d);
                }
                Op::Rows(a, index) => {
                    let src = self.value(*a);
                    let mut d = Tensor::zeros(src.rows, src.cols);
                    for (i, &r) in index.iter().enumerate() {
                        for (o, &x) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                            *o += x;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ShiftRows { src, block, offset } => {
                    let mut d = Tensor::zeros(g.rows, g.cols);
                    for b in 0..g.rows / block {
                        for t in 0..*block {
                            let s = t as isize + offset;
                            if (0..*block as isize).contains(&s) {
                                let from = g.row(b * block + t).to_vec();
                                for (o, x) in d.row_mut(b * block + s as usize).iter_mut().zip(from) {
                                    *o += x;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *src, d);
                }
                Op::LayerNorm {
                    src,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let n = g.cols;
                    let gv = self.value(*gamma);
                    let mut dg = Tensor::zeros(1, n);
                    let mut db = Tensor::zeros(1, n);
                    let mut dx = Tensor::zeros(g.rows, n);
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let xh = &xhat[r * n..(r + 1) * n];
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        let mut dxhat = vec![0.0; n];
                        for c in 0..n {
                            dg.data[c] += gr[c] * xh[c];
                            db.data[c] += gr[c];
                            dxhat[c] = gr[c] * gv.data[c];
                            sum_d += dxhat[c];
                            sum_dx += dxhat[c] * xh[c];
                        }
                        let k = inv_std[r] / n as f64;
                        for c in 0..n {
                            dx.data[r * n + c] =
                                k * (n as f64 * dxhat[c] - sum_d - xh[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *gamma, dg);
                    acc(&mut grads, *beta, db);
                    acc(&mut grads, *src, dx);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    block,
                    heads,
                    mask,
                    probs,
                } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (rows, width) = qv.shape();
                    let (block, heads) = (*block, *heads);
                    let dh = width / heads;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dq = Tensor::zeros(rows, width);
                    let mut dk = Tensor::zeros(rows, width);
                    let mut dv = Tensor::zeros(rows, width);
                    let mut dp = vec![0.0; block];
                    for b in 0..rows / block {
                        for h in 0..heads {
                            let cols = h * dh..(h + 1) * dh;
                            for i in 0..block {
                                let p = &probs[((b * heads + h) * block + i) * block..][..block];
                                let go = &g.row(b * block + i)[cols.clone()];
                                let mut weighted = 0.0;
                                for j in 0..block {
                                    if !mask[b * block + j] {
                                        dp[j] = 0.0;
                                        continue;
                                    }
                                    let vj = &vv.row(b * block + j)[cols.clone()];
                                    dp[j] = dot(go, vj);
                                    weighted += p[j] * dp[j];
                                    let dvj = &mut dv.data[(b * block + j) * width..][cols.clone()];
                                    for (o, &x) in dvj.iter_mut().zip(go) {
                                        *o += p[j] * x;
                                    }
                                }
                                let qi = qv.row(b * block + i)[cols.clone()].to_vec();
                                for j in 0..block {
                                    if !mask[b * block + j] {
                                        continue;
                                    }
                                    let ds = p[j] * (dp[j] - weighted) * scale;
                                    if ds == 0.0 {
                                        continue;
                                    }
                                    let kj = &kv.row(b * block + j)[cols.clone()];
                                    let dqi = &mut dq.data[(b * block + i) * width..][cols.clone()];
                                    for (o, &x) in dqi.iter_mut().zip(kj) {
                                        *o += ds * x;
                                    }
                                    let dkj = &mut dk.data[(b * block + j) * width..][cols.clone()];
                                    for (o, &x) in dkj.iter_mut().zip(&qi) {
                                        *o += ds * x;
                                    }
                                }
                            }
                        }
                    }
                    acc(&mut grads, *q, dq);
                    acc(&mut grads, *k, dk);
                    acc(&mut grads, *v, dv);
                }
                Op::MaskedMaxPool { src, argmax } => {
                    let x = self.value(*src);
                    let mut d = Tensor::zeros(x.rows, x.cols);
                    for b in 0..g.rows {
                        for c in 0..g.cols {
                            let r = argmax[b * g.cols + c];
                            d.data[r * x.cols + c] += g.data[b * g.cols + c];
                        }
                    }
                    acc(&mut grads, *src, d);
                }
                Op::WeightedBce {
                    logits,
                    labels,
                    pos_weight,
                    sig,
                } => {
                    let n = labels.len() as f64;
                    let scale = g.data[0] / n;
                    let d = sig
                        .iter()
                        .zip(labels)
                        .map(|(&s, &y)| scale * (pos_weight * y * (s - 1.0) + (1.0 - y) * s))
                        .collect();
                    let shape = self.value(*logits).shape();
                    acc(&mut grads, *logits, Tensor::from_vec(shape.0, shape.1, d));
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::from_vec(x.rows, x.cols, vec![g.data[0]; x.len()]));
                }
            }
        }
        out
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}
