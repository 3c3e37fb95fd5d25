use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gated multimodal unit parameters. All maps are affine, `y = x W + b`, with
/// `W` row-major `in x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub text_dim: usize,
    pub eng_dim: usize,
    pub width: usize,
    pub w_text: Vec<f64>,
    pub b_text: Vec<f64>,
    pub w_eng: Vec<f64>,
    pub b_eng: Vec<f64>,
    pub w_gate: Vec<f64>,
    pub b_gate: Vec<f64>,
}

impl FusionParams {
    pub fn zeros(text_dim: usize, eng_dim: usize, width: usize) -> Self {
        FusionParams {
            text_dim,
            eng_dim,
            width,
            w_text: vec![0.0; text_dim * width],
            b_text: vec![0.0; width],
            w_eng: vec![0.0; eng_dim * width],
            b_eng: vec![0.0; width],
            w_gate: vec![0.0; (text_dim + eng_dim) * width],
            b_gate: vec![0.0; width],
        }
    }

    pub fn random(text_dim: usize, eng_dim: usize, width: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |fan_in: usize, n: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..b)).collect()
        };
        FusionParams {
            text_dim,
            eng_dim,
            width,
            w_text: uniform(text_dim, text_dim * width),
            b_text: uniform(text_dim, width),
            w_eng: uniform(eng_dim, eng_dim * width),
            b_eng: uniform(eng_dim, width),
            w_gate: uniform(text_dim + eng_dim, (text_dim + eng_dim) * width),
            b_gate: uniform(text_dim + eng_dim, width),
        }
    }

    fn check(&self, text: &[f64], eng: &[f64]) -> Result<()> {
        let w = self.width;
        let shapes_ok = self.w_text.len() == self.text_dim * w
            && self.w_eng.len() == self.eng_dim * w
            && self.w_gate.len() == (self.text_dim + self.eng_dim) * w
            && self.b_text.len() == w
            && self.b_eng.len() == w
            && self.b_gate.len() == w;
        if !shapes_ok {
            return Err(Error::Config("fusion parameter shapes disagree with their widths".into()));
        }
        if text.len() != self.text_dim || eng.len() != self.eng_dim {
            return Err(Error::Config(format!(
                "fusion expects inputs of width {} and {}, got {} and {}",
                self.text_dim,
                self.eng_dim,
                text.len(),
                eng.len()
            )));
        }
        Ok(())
    }
}

fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let width = b.len();
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        for (yj, &wij) in y.iter_mut().zip(&w[i * width..(i + 1) * width]) {
            *yj += xi * wij;
        }
    }
    y
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Branch activations, gate and fused output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParts {
    pub text_branch: Vec<f64>,
    pub eng_branch: Vec<f64>,
    pub gate: Vec<f64>,
    pub fused: Vec<f64>,
}

pub fn gated_fusion_parts(text: &[f64], eng: &[f64], p: &FusionParams) -> Result<FusionParts> {
    p.check(text, eng)?;
    let a: Vec<f64> = affine(text, &p.w_text, &p.b_text).into_iter().map(f64::tanh).collect();
    let b: Vec<f64> = affine(eng, &p.w_eng, &p.b_eng).into_iter().map(f64::tanh).collect();
    let joint: Vec<f64> = text.iter().chain(eng).copied().collect();
    let z: Vec<f64> = affine(&joint, &p.w_gate, &p.b_gate).into_iter().map(sigmoid).collect();
    let h = a
        .iter()
        .zip(&b)
        .zip(&z)
        .map(|((&a, &b), &z)| z * a + (1.0 - z) * b)
        .collect();
    Ok(FusionParts {
        text_branch: a,
        eng_branch: b,
        gate: z,
        fused: h,
    })
}

/// `h = z * tanh(text W_t + b_t) + (1 - z) * tanh(eng W_e + b_e)` with
/// `z = sigmoid([text, eng] W_z + b_z)`.
pub fn gated_fusion(text: &[f64], eng: &[f64], p: &FusionParams) -> Result<Vec<f64>> {
    gated_fusion_parts(text, eng, p).map(|parts| parts.fused)
}
