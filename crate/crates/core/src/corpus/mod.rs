//! Article and tweet-series corpora.

mod io;
mod synthetic;
mod validate;

use serde::{Deserialize, Serialize};

pub use io::{
    load_articles, load_tweet_series, normalize_timestamps, parse_articles, parse_tweet_series,
    write_articles, write_tweet_series, LoadOptions,
};
pub use synthetic::{
    generate_synthetic_corpus, CorpusShape, SignalPlacement, SyntheticCorpus, SyntheticSpec,
};
pub use validate::{validate_corpus, ValidationReport, Violation};

/// One news item with aggregate engagement (shares + likes + comments).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub description: String,
    pub source: String,
    pub engagement: u64,
    /// `Some(true)` marks a fake item.
    pub veracity: Option<bool>,
}

/// A tweet inside a propagation path. `delta_t` is seconds since the first
/// tweet of its series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub text: String,
    pub delta_t: f64,
    pub followers: u64,
    pub following: u64,
    pub verified: bool,
    pub likes: u64,
}

/// Time-ordered tweets referring to the same story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetSeries {
    pub id: String,
    pub tweets: Vec<Tweet>,
    pub veracity: Option<bool>,
}

impl TweetSeries {
    /// Sum of likes over every tweet in the series.
    pub fn total_likes(&self) -> u64 {
        self.tweets.iter().map(|t| t.likes).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Corpus {
    Articles(Vec<Article>),
    Series(Vec<TweetSeries>),
}

impl Corpus {
    pub fn len(&self) -> usize {
        match self {
            Corpus::Articles(a) => a.len(),
            Corpus::Series(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Corpus::Articles(a) => a.iter().map(|x| x.id.as_str()).collect(),
            Corpus::Series(s) => s.iter().map(|x| x.id.as_str()).collect(),
        }
    }

    pub fn shape(&self) -> CorpusShape {
        match self {
            Corpus::Articles(_) => CorpusShape::Article,
            Corpus::Series(_) => CorpusShape::Series,
        }
    }

    /// Canonical line-delimited serialization, as written by
    /// [`write_articles`] / [`write_tweet_series`].
    pub fn to_canonical(&self) -> String {
        match self {
            Corpus::Articles(a) => io::articles_to_string(a),
            Corpus::Series(s) => io::series_to_string(s),
        }
    }

    /// Embedding-store keys the corpus needs.
    pub fn embedding_keys(&self) -> Vec<String> {
        match self {
            Corpus::Articles(a) => a
                .iter()
                .flat_map(|x| [title_key(&x.id), description_key(&x.id)])
                .collect(),
            Corpus::Series(s) => s
                .iter()
                .flat_map(|x| x.tweets.iter().map(|t| t.id.clone()))
                .collect(),
        }
    }

    /// `(key, text)` pairs to embed, one per key, in corpus order.
    pub fn texts(&self) -> Vec<(String, String)> {
        match self {
            Corpus::Articles(a) => a
                .iter()
                .flat_map(|x| {
                    [
                        (title_key(&x.id), x.title.clone()),
                        (description_key(&x.id), x.description.clone()),
                    ]
                })
                .collect(),
            Corpus::Series(s) => s
                .iter()
                .flat_map(|x| x.tweets.iter().map(|t| (t.id.clone(), t.text.clone())))
                .collect(),
        }
    }
}

/// Embedding-store key of an article title.
pub fn title_key(article_id: &str) -> String {
    format!("{article_id}#title")
}

/// Embedding-store key of an article description.
pub fn description_key(article_id: &str) -> String {
    format!("{article_id}#description")
}
