use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Tweet;
use crate::error::{Error, Result};

/// Number of per-tweet numeric signals: (delta_t, followers, following,
/// verified, likes).
pub const NUMERIC_FEATURES: usize = 5;

/// Width of the learned numeric projection.
pub const PROJECTION_WIDTH: usize = 32;

const TRANSFORMED: [&str; 4] = ["delta_t", "followers", "following", "likes"];

fn raw_counts(t: &Tweet) -> [f64; 4] {
    [t.delta_t, t.followers as f64, t.following as f64, t.likes as f64]
}

/// Per-fold standardization of `log(1 + x)` for the four non-binary signals.
/// `verified` passes through untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericTransform {
    pub means: [f64; 4],
    pub stds: [f64; 4],
    pub diagnostics: Vec<String>,
}

impl NumericTransform {
    /// Fits on training tweets only.
    pub fn fit<'a>(tweets: impl IntoIterator<Item = &'a Tweet>) -> Result<Self> {
        let logs: Vec<[f64; 4]> = tweets
            .into_iter()
            .map(|t| raw_counts(t).map(f64::ln_1p))
            .collect();
        if logs.is_empty() {
            return Err(Error::Validation("numeric transform needs at least one tweet".into()));
        }
        let n = logs.len() as f64;
        let mut means = [0.0; 4];
        let mut stds = [0.0; 4];
        let mut diagnostics = Vec::new();
        for f in 0..4 {
            let mean = logs.iter().map(|r| r[f]).sum::<f64>() / n;
            let var = logs.iter().map(|r| (r[f] - mean).powi(2)).sum::<f64>() / n;
            means[f] = mean;
            stds[f] = if var > 0.0 {
                var.sqrt()
            } else {
                diagnostics.push(format!("constant feature {}: std set to 1", TRANSFORMED[f]));
                1.0
            };
        }
        Ok(NumericTransform {
            means,
            stds,
            diagnostics,
        })
    }

    /// `(delta_t', followers', following', verified, likes')`.
    pub fn apply(&self, t: &Tweet) -> [f64; NUMERIC_FEATURES] {
        let x = raw_counts(t);
        let z = |f: usize| (x[f].ln_1p() - self.means[f]) / self.stds[f];
        [z(0), z(1), z(2), if t.verified { 1.0 } else { 0.0 }, z(3)]
    }
}

/// Affine map from the five numeric signals to `width` dimensions:
/// `y = x W + b`, `W` stored row-major as `5 x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericProjection {
    pub width: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NumericProjection {
    pub fn zeros(width: usize) -> Self {
        NumericProjection {
            width,
            weight: vec![0.0; NUMERIC_FEATURES * width],
            bias: vec![0.0; width],
        }
    }

    /// Fan-in scaled uniform initialization.
    pub fn random(width: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (NUMERIC_FEATURES as f64).sqrt();
        NumericProjection {
            width,
            weight: (0..NUMERIC_FEATURES * width)
                .map(|_| rng.random_range(-bound..bound))
                .collect(),
            bias: (0..width).map(|_| rng.random_range(-bound..bound)).collect(),
        }
    }

    pub fn apply(&self, x: &[f64; NUMERIC_FEATURES]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weight[i * self.width..(i + 1) * self.width];
            for (yj, &w) in y.iter_mut().zip(row) {
                *yj += xi * w;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(dt: f64, followers: u64, following: u64, verified: bool, likes: u64) -> Tweet {
        Tweet {
            id: "t".into(),
            text: String::new(),
            delta_t: dt,
            followers,
            following,
            verified,
            likes,
        }
    }

    #[test]
    fn constant_feature_gets_unit_std() {
        let ts = vec![tweet(0.0, 100, 1, false, 0), tweet(10.0, 100, 5, true, 3)];
        let tr = NumericTransform::fit(&ts).unwrap();
        assert_eq!(tr.means[1], 101f64.ln());
        assert_eq!(tr.stds[1], 1.0);
        assert!(tr.diagnostics.iter().any(|d| d.contains("followers")));
    }

    #[test]
    fn log1p_mean_hand_computed() {
        // counts are integral, so use the real-valued delay: {0, e - 1} -> {0, 1}
        let e = std::f64::consts::E;
        let ts = vec![tweet(0.0, 1, 1, false, 1), tweet(e - 1.0, 1, 1, false, 1)];
        let tr = NumericTransform::fit(&ts).unwrap();
        assert!((tr.means[0] - 0.5).abs() < 1e-15);
        assert!((tr.stds[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_fit_is_error() {
        assert!(NumericTransform::fit(std::iter::empty::<&Tweet>()).is_err());
    }

    #[test]
    fn apply_centering_and_passthrough() {
        let ts = vec![tweet(4.0, 9, 99, false, 2), tweet(4.0, 9, 99, true, 2)];
        let tr = NumericTransform::fit(&ts).unwrap();
        assert_eq!(tr.apply(&ts[0]), [0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(tr.apply(&ts[1])[3], 1.0);
    }

    #[test]
    fn zero_delay_maps_to_negative_z() {
        let ts = vec![tweet(0.0, 1, 1, false, 1), tweet(100.0, 1, 1, false, 1)];
        let tr = NumericTransform::fit(&ts).unwrap();
        let out = tr.apply(&ts[0]);
        assert_eq!(out[0], -tr.means[0] / tr.stds[0]);
    }

    #[test]
    fn refit_with_validation_rows_changes_statistics() {
        let train = vec![tweet(1.0, 10, 5, false, 0), tweet(30.0, 50, 8, false, 4)];
        let heldout = vec![tweet(900.0, 100000, 3000, true, 250)];
        let a = NumericTransform::fit(&train).unwrap();
        let b = NumericTransform::fit(train.iter().chain(&heldout)).unwrap();
        for f in 0..4 {
            assert_ne!(a.means[f], b.means[f]);
            assert_ne!(a.stds[f], b.stds[f]);
        }
    }

    #[test]
    fn zero_projection_is_zero() {
        let p = NumericProjection::zeros(PROJECTION_WIDTH);
        assert_eq!(p.apply(&[1.0, -2.0, 3.0, 1.0, 0.5]), vec![0.0; 32]);
    }
}
