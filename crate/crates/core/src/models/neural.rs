use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{FusionParams, NumericProjection, NUMERIC_FEATURES};

use super::batch::Batch;
use super::config::{Family, ModelConfig};
use super::graph::{Graph, NodeId, ParamSet};
use super::tensor::Tensor;

/// Initialization scheme, echoed in run manifests.
pub const INIT_SCHEME: &str =
    "fan_in_uniform(affine), orthogonal(recurrent), normal(source_emb), normal_0.02(positions), ones/zeros(layer_norm)";

/// Items per forward chunk when scoring.
const SCORE_CHUNK: usize = 256;

/// A trainable network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let b = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-b..b)).collect())
}

fn normal(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect::<Vec<f64>>(),
    )
}

/// Random `n x n` orthogonal matrix by Gram-Schmidt on a Gaussian draw.
fn orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        for u in &basis {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    basis
}

fn add_linear(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, out: usize) {
    ps.add(format!("{name}.w"), uniform(fan_in, out, fan_in, rng));
    ps.add(format!("{name}.b"), uniform(1, out, fan_in, rng));
}

/// Hidden-to-hidden weights, `h x (gates * h)`, one orthogonal block per gate.
fn add_recurrent(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, h: usize, gates: usize) {
    let mut w = Tensor::zeros(h, gates * h);
    for k in 0..gates {
        let q = orthogonal(h, rng);
        for (i, row) in q.iter().enumerate() {
            w.row_mut(i)[k * h..(k + 1) * h].copy_from_slice(row);
        }
    }
    ps.add(format!("{name}.w"), w);
    ps.add(format!("{name}.b"), uniform(1, gates * h, h, rng));
}

fn gate_count(family: Family) -> usize {
    match family {
        Family::Gru => 3,
        Family::Lstm => 4,
        _ => 1,
    }
}

impl NeuralModel {
    /// Builds and initializes the parameters from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        if !config.family.is_neural() {
            return Err(Error::Config(format!(
                "`{}` is not a neural family",
                config.family
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ps = ParamSet::new();
        let w = config.widths.clone();
        let d = config.input_dim;
        let head_in = match config.family {
            Family::Mlp => d,
            Family::MlpSourceEmb => {
                ps.add("source.emb", normal(config.source_rows, w.source_emb, 1.0, &mut rng));
                d + w.source_emb
            }
            Family::MlpAvgEng => d + 1,
            // Branch width equals the head input width.
            Family::MlpGating => {
                add_linear(&mut ps, &mut rng, "fuse.text", d, d);
                add_linear(&mut ps, &mut rng, "fuse.eng", 1, d);
                add_linear(&mut ps, &mut rng, "fuse.gate", d + 1, d);
                d
            }
            family => {
                if config.view.uses_numeric() {
                    add_linear(&mut ps, &mut rng, "proj", NUMERIC_FEATURES, w.projection);
                }
                let step = config.step_width();
                match family {
                    Family::Rnn | Family::Gru | Family::Lstm => {
                        let k = gate_count(family);
                        for dir in ["fwd", "bwd"] {
                            add_linear(&mut ps, &mut rng, &format!("{dir}.ih"), step, k * w.recurrent);
                            add_recurrent(&mut ps, &mut rng, &format!("{dir}.hh"), w.recurrent, k);
                        }
                        2 * w.recurrent
                    }
                    Family::Cnn => {
                        add_linear(&mut ps, &mut rng, "conv1", 3 * step, w.cnn_channels);
                        add_linear(&mut ps, &mut rng, "conv2", 3 * w.cnn_channels, w.cnn_channels);
                        w.cnn_channels
                    }
                    Family::Transformer => {
                        let m = w.model;
                        add_linear(&mut ps, &mut rng, "inproj", step, m);
                        ps.add("pos", normal(config.max_len, m, 0.02, &mut rng));
                        for name in ["attn.q", "attn.k", "attn.v", "attn.o"] {
                            add_linear(&mut ps, &mut rng, name, m, m);
                        }
                        ps.add("ln1.g", Tensor::from_vec(1, m, vec![1.0; m]));
                        ps.add("ln1.b", Tensor::zeros(1, m));
                        add_linear(&mut ps, &mut rng, "ffn.1", m, w.ffn);
                        add_linear(&mut ps, &mut rng, "ffn.2", w.ffn, m);
                        ps.add("ln2.g", Tensor::from_vec(1, m, vec![1.0; m]));
                        ps.add("ln2.b", Tensor::zeros(1, m));
                        m
                    }
                    _ => unreachable!(),
                }
            }
        };
        add_linear(&mut ps, &mut rng, "head.1", head_in, w.head);
        add_linear(&mut ps, &mut rng, "head.2", w.head, 1);
        Ok(NeuralModel { config, params: ps })
    }

    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let fresh = NeuralModel::new(config.clone())?;
        if fresh.params.names() != params.names()
            || fresh
                .params
                .tensors()
                .iter()
                .zip(params.tensors())
                .any(|(a, b)| a.shape() != b.shape() || b.data.len() != b.rows * b.cols)
        {
            return Err(Error::Config(format!(
                "parameter layout does not match a `{}` model with this config",
                config.family
            )));
        }
        Ok(NeuralModel { config, params })
    }

    /// Checks that `batch` fits this model.
    pub fn check_batch(&self, batch: &Batch) -> Result<()> {
        let c = &self.config;
        match batch {
            Batch::Vectors { x, source, eng } => {
                if !c.family.is_article_head() {
                    return Err(Error::Config(format!("`{}` needs series input", c.family)));
                }
                if x.cols != c.input_dim {
                    return Err(Error::Config(format!(
                        "input has {} columns, model expects {}",
                        x.cols, c.input_dim
                    )));
                }
                if source.len() != x.rows || eng.len() != x.rows {
                    return Err(Error::Config("batch side inputs have the wrong length".into()));
                }
                if let Some(&s) = source.iter().find(|&&s| s >= c.source_rows) {
                    return Err(Error::Config(format!(
                        "source row {s} outside vocabulary of {}",
                        c.source_rows
                    )));
                }
            }
            Batch::Series {
                len, text, numeric, ..
            } => {
                if !c.family.is_sequence() {
                    return Err(Error::Config(format!("`{}` needs vector input", c.family)));
                }
                if c.view.uses_text() && text.cols != c.input_dim {
                    return Err(Error::Config(format!(
                        "tweet text has {} columns, model expects {}",
                        text.cols, c.input_dim
                    )));
                }
                if c.view.uses_numeric() && numeric.cols != NUMERIC_FEATURES {
                    return Err(Error::Config("numeric block must have 5 columns".into()));
                }
                if c.family == Family::Transformer && *len > c.max_len {
                    return Err(Error::Config(format!(
                        "series length {len} exceeds positional table of {}",
                        c.max_len
                    )));
                }
                batch.check_masks()?;
            }
        }
        Ok(())
    }

    /// Records the forward pass and returns the `B x 1` logit node. Dropout
    /// is active only when `dropout_rng` is given.
    pub fn forward<'p>(
        &'p self,
        g: &mut Graph<'p>,
        batch: &Batch,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<NodeId> {
        self.check_batch(batch)?;
        let mut f = Fwd {
            g,
            rng: dropout_rng,
            p: self.config.dropout,
        };
        let c = &self.config;
        let pooled = match batch {
            Batch::Vectors { x, source, eng } => {
                let x = f.g.input(x.clone());
                match c.family {
                    Family::Mlp => x,
                    Family::MlpSourceEmb => {
                        let table = f.g.param_named("source.emb");
                        let e = f.g.rows(table, source.clone());
                        f.g.concat_cols(&[x, e])
                    }
                    Family::MlpAvgEng => {
                        let e = f.g.input(Tensor::column(eng.clone()));
                        f.g.concat_cols(&[x, e])
                    }
                    Family::MlpGating => {
                        let e = f.g.input(Tensor::column(eng.clone()));
                        f.gmu(x, e)
                    }
                    _ => unreachable!(),
                }
            }
            Batch::Series {
                len,
                text,
                numeric,
                mask,
            } => {
                let x = f.series_input(c, text, numeric, mask);
                match c.family {
                    Family::Rnn | Family::Gru | Family::Lstm => {
                        let hf = f.recurrent(c.family, "fwd", x, *len, mask, false);
                        let hb = f.recurrent(c.family, "bwd", x, *len, mask, true);
                        f.g.concat_cols(&[hf, hb])
                    }
                    Family::Cnn => f.cnn(x, *len, mask),
                    Family::Transformer => f.transformer(x, *len, mask, c.widths.heads),
                    _ => unreachable!(),
                }
            }
        };
        Ok(f.head(pooled))
    }

    /// Eval-mode logits, one per item.
    pub fn logits(&self, batch: &Batch) -> Result<Vec<f64>> {
        let n = batch.size();
        let mut out = Vec::with_capacity(n);
        let mut start = 0;
        while start < n {
            let end = (start + SCORE_CHUNK).min(n);
            let idx: Vec<usize> = (start..end).collect();
            let chunk = if start == 0 && end == n {
                batch.clone()
            } else {
                batch.select(&idx)
            };
            let mut g = Graph::new(&self.params);
            let z = self.forward(&mut g, &chunk, None)?;
            out.extend_from_slice(&g.value(z).data);
            start = end;
        }
        Ok(out)
    }

    /// Mean weighted BCE over the batch and its parameter gradients.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        labels: &[bool],
        pos_weight: f64,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new(&self.params);
        let z = self.forward(&mut g, batch, dropout_rng)?;
        let y = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        let loss = g.weighted_bce(z, y, pos_weight);
        let value = g.value(loss).data[0];
        Ok((value, g.backward(loss)))
    }

    /// The learned per-tweet numeric projection, when the view uses one.
    pub fn numeric_projection(&self) -> Option<NumericProjection> {
        let w = self.params.get(self.params.find("proj.w")?);
        let b = self.params.get(self.params.find("proj.b")?);
        Some(NumericProjection {
            width: w.cols,
            weight: w.data.clone(),
            bias: b.data.clone(),
        })
    }

    /// Gated fusion parameters of the `mlp+gating` variant.
    pub fn fusion_params(&self) -> Option<FusionParams> {
        let get = |n: &str| self.params.find(n).map(|id| self.params.get(id).clone());
        let (wt, bt) = (get("fuse.text.w")?, get("fuse.text.b")?);
        let (we, be) = (get("fuse.eng.w")?, get("fuse.eng.b")?);
        let (wg, bg) = (get("fuse.gate.w")?, get("fuse.gate.b")?);
        Some(FusionParams {
            text_dim: wt.rows,
            eng_dim: we.rows,
            width: wt.cols,
            w_text: wt.data,
            b_text: bt.data,
            w_eng: we.data,
            b_eng: be.data,
            w_gate: wg.data,
            b_gate: bg.data,
        })
    }
}

struct Fwd<'a, 'p, 'r> {
    g: &'a mut Graph<'p>,
    rng: Option<&'r mut ChaCha8Rng>,
    p: f64,
}

impl<'a, 'p, 'r> Fwd<'a, 'p, 'r> {
    fn linear(&mut self, x: NodeId, name: &str) -> NodeId {
        let w = self.g.param_named(&format!("{name}.w"));
        let b = self.g.param_named(&format!("{name}.b"));
        let y = self.g.matmul(x, w);
        self.g.add_bias(y, b)
    }

    fn dropout(&mut self, x: NodeId) -> NodeId {
        let p = self.p;
        match self.rng.as_deref_mut() {
            Some(rng) if p > 0.0 => {
                let n = self.g.value(x).len();
                let keep = 1.0 / (1.0 - p);
                let mask = (0..n)
                    .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                    .collect();
                self.g.mul_const(x, mask)
            }
            _ => x,
        }
    }

    fn head(&mut self, x: NodeId) -> NodeId {
        let h = self.linear(x, "head.1");
        let h = self.g.gelu(h);
        let h = self.dropout(h);
        self.linear(h, "head.2")
    }

    fn gmu(&mut self, text: NodeId, eng: NodeId) -> NodeId {
        let a = self.linear(text, "fuse.text");
        let a = self.g.tanh(a);
        let b = self.linear(eng, "fuse.eng");
        let b = self.g.tanh(b);
        let joint = self.g.concat_cols(&[text, eng]);
        let z = self.linear(joint, "fuse.gate");
        let z = self.g.sigmoid(z);
        let za = self.g.mul(z, a);
        let one_minus = self.g.affine(z, -1.0, 1.0);
        let zb = self.g.mul(one_minus, b);
        self.g.add(za, zb)
    }

    fn series_input(
        &mut self,
        c: &ModelConfig,
        text: &Tensor,
        numeric: &Tensor,
        mask: &[bool],
    ) -> NodeId {
        let mut parts = Vec::with_capacity(2);
        if c.view.uses_text() {
            parts.push(self.g.input(text.clone()));
        }
        if c.view.uses_numeric() {
            let n = self.g.input(numeric.clone());
            parts.push(self.linear(n, "proj"));
        }
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            self.g.concat_cols(&parts)
        };
        self.g.row_scale(x, mask_f64(mask))
    }

    /// `m * new + (1 - m) * old`, row-wise.
    fn blend(&mut self, new: NodeId, old: NodeId, m: &[f64]) -> NodeId {
        let a = self.g.row_scale(new, m.to_vec());
        let b = self.g.row_scale(old, m.iter().map(|v| 1.0 - v).collect());
        self.g.add(a, b)
    }

    fn recurrent(
        &mut self,
        family: Family,
        dir: &str,
        x: NodeId,
        len: usize,
        mask: &[bool],
        reverse: bool,
    ) -> NodeId {
        let n = mask.len() / len;
        let hw_id = self.g.param_named(&format!("{dir}.hh.w"));
        let hsz = self.g.value(hw_id).rows;
        let xw = self.linear(x, &format!("{dir}.ih"));
        let mut h = self.g.input(Tensor::zeros(n, hsz));
        let mut cell = self.g.input(Tensor::zeros(n, hsz));
        let steps: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        let hh = format!("{dir}.hh");
        for t in steps {
            let idx: Vec<usize> = (0..n).map(|b| b * len + t).collect();
            let m: Vec<f64> = idx.iter().map(|&r| if mask[r] { 1.0 } else { 0.0 }).collect();
            let xt = self.g.rows(xw, idx);
            let hw = self.linear(h, &hh);
            let h_new = match family {
                Family::Rnn => {
                    let s = self.g.add(xt, hw);
                    self.g.tanh(s)
                }
                Family::Gru => {
                    let xr = self.g.slice_cols(xt, 0, 2 * hsz);
                    let hr = self.g.slice_cols(hw, 0, 2 * hsz);
                    let rz = self.g.add(xr, hr);
                    let rz = self.g.sigmoid(rz);
                    let r = self.g.slice_cols(rz, 0, hsz);
                    let z = self.g.slice_cols(rz, hsz, hsz);
                    let xn = self.g.slice_cols(xt, 2 * hsz, hsz);
                    let hn = self.g.slice_cols(hw, 2 * hsz, hsz);
                    let rh = self.g.mul(r, hn);
                    let nn = self.g.add(xn, rh);
                    let nn = self.g.tanh(nn);
                    let keep = self.g.affine(z, -1.0, 1.0);
                    let a = self.g.mul(keep, nn);
                    let b = self.g.mul(z, h);
                    self.g.add(a, b)
                }
                Family::Lstm => {
                    let s = self.g.add(xt, hw);
                    let ifs = self.g.slice_cols(s, 0, 2 * hsz);
                    let ifs = self.g.sigmoid(ifs);
                    let i = self.g.slice_cols(ifs, 0, hsz);
                    let fg = self.g.slice_cols(ifs, hsz, hsz);
                    let gg = self.g.slice_cols(s, 2 * hsz, hsz);
                    let gg = self.g.tanh(gg);
                    let o = self.g.slice_cols(s, 3 * hsz, hsz);
                    let o = self.g.sigmoid(o);
                    let fc = self.g.mul(fg, cell);
                    let ig = self.g.mul(i, gg);
                    let c_new = self.g.add(fc, ig);
                    let tc = self.g.tanh(c_new);
                    let h_new = self.g.mul(o, tc);
                    cell = self.blend(c_new, cell, &m);
                    h_new
                }
                _ => unreachable!(),
            };
            h = self.blend(h_new, h, &m);
        }
        h
    }

    fn conv(&mut self, x: NodeId, len: usize, name: &str) -> NodeId {
        let prev = self.g.shift_rows(x, len, -1);
        let next = self.g.shift_rows(x, len, 1);
        let window = self.g.concat_cols(&[prev, x, next]);
        self.linear(window, name)
    }

    fn cnn(&mut self, x: NodeId, len: usize, mask: &[bool]) -> NodeId {
        let m = mask_f64(mask);
        let h = self.conv(x, len, "conv1");
        let h = self.g.gelu(h);
        let h = self.g.row_scale(h, m);
        let h = self.conv(h, len, "conv2");
        let h = self.g.gelu(h);
        self.g.masked_max_pool(h, len, mask)
    }

    fn transformer(&mut self, x: NodeId, len: usize, mask: &[bool], heads: usize) -> NodeId {
        let n = mask.len() / len;
        let e = self.linear(x, "inproj");
        let table = self.g.param_named("pos");
        let pos = self.g.rows(table, (0..n).flat_map(|_| 0..len).collect());
        let x0 = self.g.add(e, pos);
        let q = self.linear(x0, "attn.q");
        let k = self.linear(x0, "attn.k");
        let v = self.linear(x0, "attn.v");
        let a = self.g.attention(q, k, v, len, heads, mask.to_vec());
        let o = self.linear(a, "attn.o");
        let o = self.dropout(o);
        let r1 = self.g.add(x0, o);
        let (g1, b1) = (self.g.param_named("ln1.g"), self.g.param_named("ln1.b"));
        let x1 = self.g.layer_norm(r1, g1, b1);
        let f = self.linear(x1, "ffn.1");
        let f = self.g.gelu(f);
        let f = self.linear(f, "ffn.2");
        let f = self.dropout(f);
        let r2 = self.g.add(x1, f);
        let (g2, b2) = (self.g.param_named("ln2.g"), self.g.param_named("ln2.b"));
        let x2 = self.g.layer_norm(r2, g2, b2);
        self.g.masked_max_pool(x2, len, mask)
    }
}

fn mask_f64(mask: &[bool]) -> Vec<f64> {
    mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
}
