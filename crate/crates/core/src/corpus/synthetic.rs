//! Desk-scale corpora with planted, tunable signal.
//!
//! Text "embeddings" are drawn directly as vectors: isotropic Gaussian noise
//! plus a class-dependent shift of `±strength/2` along one fixed random unit
//! direction, so the class-mean separation equals `text_signal_strength`.
//! Numeric signal is planted in source choice (articles) or in follower and
//! like counts (series). Structure and embeddings use separate random streams,
//! so two specs differing only in `embedding_dim` share ids, labels, sources
//! and counts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{description_key, title_key, Article, Corpus, Tweet, TweetSeries};
use crate::error::{Error, Result};
use crate::features::EmbeddingStore;
use crate::labeling::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusShape {
    Article,
    Series,
}

/// Which tweets of a series carry the class signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPlacement {
    /// Every tweet is shifted; evidence accumulates with series length.
    EveryTweet,
    /// Only the first tweet is shifted; later tweets are noise with zero likes.
    FirstTweet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub task: Task,
    pub corpus_shape: CorpusShape,
    pub positive_rate: f64,
    pub text_signal_strength: f64,
    pub numeric_signal_strength: f64,
    pub embedding_dim: usize,
    /// Inclusive `[min, max]` tweets per series.
    pub series_length_range: (usize, usize),
    pub signal_placement: SignalPlacement,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.n_items < 2 {
            return fail(format!("n_items must be at least 2, got {}", self.n_items));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return fail(format!("positive_rate must lie in (0, 1), got {}", self.positive_rate));
        }
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be at least 1".into());
        }
        for (name, v) in [
            ("text_signal_strength", self.text_signal_strength),
            ("numeric_signal_strength", self.numeric_signal_strength),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        let (lo, hi) = self.series_length_range;
        if lo == 0 || lo > hi {
            return fail(format!("series_length_range [{lo}, {hi}] is empty or starts at 0"));
        }
        Ok(())
    }
}

/// Generated corpus, its embeddings and the latent class of every item.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub store: EmbeddingStore,
    pub labels: Vec<bool>,
}

struct TextSampler {
    rng: ChaCha8Rng,
    direction: Vec<f64>,
    strength: f64,
}

impl TextSampler {
    fn new(seed: u64, dim: usize, strength: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03);
        let mut direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        direction.iter_mut().for_each(|x| *x /= norm);
        TextSampler {
            rng,
            direction,
            strength,
        }
    }

    /// `signal` is `Some(class)` for shifted vectors, `None` for pure noise.
    fn sample(&mut self, signal: Option<bool>) -> Vec<f64> {
        let shift = match signal {
            Some(true) => 0.5 * self.strength,
            Some(false) => -0.5 * self.strength,
            None => 0.0,
        };
        self.direction
            .iter()
            .map(|&u| {
                let z: f64 = self.rng.sample(StandardNormal);
                z + shift * u
            })
            .collect()
    }
}

fn latent_classes(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = spec.n_items;
    let n_pos = ((spec.positive_rate * n as f64).round() as usize).clamp(1, n - 1);
    let mut y: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    y.shuffle(rng);
    y
}

fn lognormal_count(rng: &mut ChaCha8Rng, mu: f64, sigma: f64) -> u64 {
    let z: f64 = Normal::new(mu, sigma).expect("finite sigma").sample(rng);
    z.exp().floor().min(1e15) as u64
}

fn signed(y: bool) -> f64 {
    if y {
        0.5
    } else {
        -0.5
    }
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let labels = latent_classes(spec, &mut rng);
    let mut text = TextSampler::new(spec.seed, spec.embedding_dim, spec.text_signal_strength);

    let (corpus, entries) = match spec.corpus_shape {
        CorpusShape::Article => articles(spec, &labels, &mut rng, &mut text),
        CorpusShape::Series => series(spec, &labels, &mut rng, &mut text),
    };
    let store = EmbeddingStore::from_entries(spec.embedding_dim, entries)?;
    Ok(SyntheticCorpus {
        corpus,
        store,
        labels,
    })
}

type Entries = Vec<(String, Vec<f64>)>;

fn articles(
    spec: &SyntheticSpec,
    labels: &[bool],
    rng: &mut ChaCha8Rng,
    text: &mut TextSampler,
) -> (Corpus, Entries) {
    let n_sources = (spec.n_items / 50).max(4);
    let hot = (n_sources / 4).max(1);
    let affinity = 1.0 - (-spec.numeric_signal_strength).exp();
    let mut out = Vec::with_capacity(labels.len());
    let mut entries = Vec::with_capacity(2 * labels.len());
    for (i, &y) in labels.iter().enumerate() {
        let source = if rng.random::<f64>() < affinity {
            if y {
                rng.random_range(0..hot)
            } else {
                rng.random_range(hot..n_sources)
            }
        } else {
            rng.random_range(0..n_sources)
        };
        let engagement = match (spec.task, y) {
            (Task::Virality, true) => 50_000 + lognormal_count(rng, 9.0, 1.0),
            (Task::Virality, false) => lognormal_count(rng, 4.5, 1.2).min(49_999),
            (Task::Veracity, _) => lognormal_count(rng, 4.5, 1.5),
        };
        let id = format!("art-{i:06}");
        entries.push((title_key(&id), text.sample(Some(y))));
        entries.push((description_key(&id), text.sample(Some(y))));
        out.push(Article {
            title: format!("synthetic title {i}"),
            description: format!("synthetic description {i}"),
            source: format!("src-{source:03}"),
            engagement,
            veracity: (spec.task == Task::Veracity).then_some(y),
            id,
        });
    }
    (Corpus::Articles(out), entries)
}

fn series(
    spec: &SyntheticSpec,
    labels: &[bool],
    rng: &mut ChaCha8Rng,
    text: &mut TextSampler,
) -> (Corpus, Entries) {
    let (lo, hi) = spec.series_length_range;
    let gap = Exp::new(1.0 / 300.0).expect("positive rate");
    let mut out = Vec::with_capacity(labels.len());
    let mut entries = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        let n = rng.random_range(lo..=hi);
        let sid = format!("ser-{i:06}");
        let mut tweets = Vec::with_capacity(n);
        let mut clock = 0.0;
        for j in 0..n {
            if j > 0 {
                clock += gap.sample(rng);
            }
            let signalled = j == 0 || spec.signal_placement == SignalPlacement::EveryTweet;
            let shift = if signalled {
                spec.numeric_signal_strength * signed(y)
            } else {
                0.0
            };
            let followers = lognormal_count(rng, 6.0 + 0.5 * shift, 1.5);
            let following = lognormal_count(rng, 5.5, 1.2);
            let verified = rng.random::<f64>() < 0.15;
            let likes = if signalled {
                let rate = (1.5 + shift).exp();
                Poisson::new(rate).expect("positive rate").sample(rng) as u64
            } else {
                0
            };
            let tid = format!("{sid}-t{j:03}");
            entries.push((tid.clone(), text.sample(signalled.then_some(y))));
            tweets.push(Tweet {
                id: tid,
                text: format!("synthetic tweet {i}/{j}"),
                delta_t: clock,
                followers,
                following,
                verified,
                likes,
            });
        }
        out.push(TweetSeries {
            id: sid,
            tweets,
            veracity: (spec.task == Task::Veracity).then_some(y),
        });
    }
    (Corpus::Series(out), entries)
}
