use crate::error::{Error, Result};
use crate::features::NUMERIC_FEATURES;

use super::config::InputView;
use super::tensor::Tensor;

/// Model inputs for a set of items.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    /// One vector per item plus its source row and source engagement scalar.
    Vectors {
        x: Tensor,
        source: Vec<usize>,
        eng: Vec<f64>,
    },
    /// `len` stacked rows per item; `text` is `(B * len) x d`, `numeric` is
    /// `(B * len) x 5`, `mask[b * len + t]` marks real steps.
    Series {
        len: usize,
        text: Tensor,
        numeric: Tensor,
        mask: Vec<bool>,
    },
}

impl Batch {
    pub fn size(&self) -> usize {
        match self {
            Batch::Vectors { x, .. } => x.rows,
            Batch::Series { len, mask, .. } => mask.len() / len,
        }
    }

    /// Items at `index`, in that order.
    pub fn select(&self, index: &[usize]) -> Batch {
        match self {
            Batch::Vectors { x, source, eng } => {
                let mut nx = Tensor::zeros(index.len(), x.cols);
                for (i, &r) in index.iter().enumerate() {
                    nx.row_mut(i).copy_from_slice(x.row(r));
                }
                Batch::Vectors {
                    x: nx,
                    source: index.iter().map(|&i| source[i]).collect(),
                    eng: index.iter().map(|&i| eng[i]).collect(),
                }
            }
            Batch::Series {
                len,
                text,
                numeric,
                mask,
            } => {
                let len = *len;
                let rows = index.len() * len;
                let mut nt = Tensor::zeros(rows, text.cols);
                let mut nn = Tensor::zeros(rows, numeric.cols);
                let mut nm = Vec::with_capacity(rows);
                for (i, &b) in index.iter().enumerate() {
                    for t in 0..len {
                        nt.row_mut(i * len + t).copy_from_slice(text.row(b * len + t));
                        nn.row_mut(i * len + t)
                            .copy_from_slice(numeric.row(b * len + t));
                        nm.push(mask[b * len + t]);
                    }
                }
                Batch::Series {
                    len,
                    text: nt,
                    numeric: nn,
                    mask: nm,
                }
            }
        }
    }

    /// Fixed-width vectors for classical baselines. Series are mean-pooled
    /// over their real steps.
    pub fn flat_features(&self, view: InputView) -> Tensor {
        match self {
            Batch::Vectors { x, .. } => x.clone(),
            Batch::Series {
                len,
                text,
                numeric,
                mask,
            } => {
                let n = mask.len() / len;
                let tw = if view.uses_text() { text.cols } else { 0 };
                let nw = if view.uses_numeric() { NUMERIC_FEATURES } else { 0 };
                let mut out = Tensor::zeros(n, tw + nw);
                for b in 0..n {
                    let real: Vec<usize> = (0..*len).filter(|&t| mask[b * len + t]).collect();
                    let k = real.len().max(1) as f64;
                    let row = out.row_mut(b);
                    for &t in &real {
                        let r = b * len + t;
                        if tw > 0 {
                            for (o, &v) in row[..tw].iter_mut().zip(text.row(r)) {
                                *o += v / k;
                            }
                        }
                        if nw > 0 {
                            for (o, &v) in row[tw..].iter_mut().zip(numeric.row(r)) {
                                *o += v / k;
                            }
                        }
                    }
                }
                out
            }
        }
    }

    /// Every series needs a real first step.
    pub fn check_masks(&self) -> Result<()> {
        if let Batch::Series { len, mask, .. } = self {
            for (b, chunk) in mask.chunks(*len).enumerate() {
                if !chunk[0] {
                    return Err(Error::Validation(format!(
                        "series {b} in batch has an all-zero or non-prefix mask"
                    )));
                }
            }
        }
        Ok(())
    }
}
