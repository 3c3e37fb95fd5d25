use crate::corpus::{Tweet, TweetSeries};
use crate::error::{Error, Result};

use super::{EmbeddingStore, NumericProjection, NumericTransform, NUMERIC_FEATURES};

/// Fixed-length, zero-padded view of a series before the numeric projection.
/// Row `t` holds the `t`-th earliest tweet; `mask[t]` is 1 for real tweets.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFeatures {
    pub len: usize,
    pub text_dim: usize,
    /// `len x text_dim`, row-major.
    pub text: Vec<f64>,
    /// `len x 5`, row-major, already transformed.
    pub numeric: Vec<f64>,
    pub mask: Vec<f64>,
}

impl SeriesFeatures {
    pub fn real_steps(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Encoded series: `len x width` matrix plus mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInput {
    pub len: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub mask: Vec<f64>,
}

impl SeriesInput {
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }
}

/// The earliest `max_len` tweets in time order.
fn earliest(series: &TweetSeries, max_len: usize) -> Vec<&Tweet> {
    let mut tweets: Vec<&Tweet> = series.tweets.iter().collect();
    tweets.sort_by(|a, b| a.delta_t.total_cmp(&b.delta_t));
    tweets.truncate(max_len);
    tweets
}

pub fn series_features(
    series: &TweetSeries,
    max_len: usize,
    store: &EmbeddingStore,
    transform: &NumericTransform,
) -> Result<SeriesFeatures> {
    if max_len == 0 {
        return Err(Error::Config("series length must be at least 1".into()));
    }
    let d = store.dim();
    let mut out = SeriesFeatures {
        len: max_len,
        text_dim: d,
        text: vec![0.0; max_len * d],
        numeric: vec![0.0; max_len * NUMERIC_FEATURES],
        mask: vec![0.0; max_len],
    };
    for (t, tweet) in earliest(series, max_len).into_iter().enumerate() {
        out.text[t * d..(t + 1) * d].copy_from_slice(store.lookup(&tweet.id)?);
        out.numeric[t * NUMERIC_FEATURES..(t + 1) * NUMERIC_FEATURES]
            .copy_from_slice(&transform.apply(tweet));
        out.mask[t] = 1.0;
    }
    Ok(out)
}

/// `[text embedding ; projection(transformed numeric)]`, length `dim + width`.
pub fn encode_tweet(
    tweet: &Tweet,
    store: &EmbeddingStore,
    transform: &NumericTransform,
    projection: &NumericProjection,
) -> Result<Vec<f64>> {
    let mut v = store.lookup(&tweet.id)?.to_vec();
    v.extend(projection.apply(&transform.apply(tweet)));
    Ok(v)
}

/// `max_len x (dim + width)` input with the earliest tweets first and zero rows
/// (mask 0) after the last real tweet.
pub fn build_series_input(
    series: &TweetSeries,
    max_len: usize,
    store: &EmbeddingStore,
    transform: &NumericTransform,
    projection: &NumericProjection,
) -> Result<SeriesInput> {
    if max_len == 0 {
        return Err(Error::Config("series length must be at least 1".into()));
    }
    let width = store.dim() + projection.width;
    let mut data = vec![0.0; max_len * width];
    let mut mask = vec![0.0; max_len];
    for (t, tweet) in earliest(series, max_len).into_iter().enumerate() {
        data[t * width..(t + 1) * width]
            .copy_from_slice(&encode_tweet(tweet, store, transform, projection)?);
        mask[t] = 1.0;
    }
    Ok(SeriesInput {
        len: max_len,
        width,
        data,
        mask,
    })
}
