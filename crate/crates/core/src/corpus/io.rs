use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{Article, Tweet, TweetSeries};
use crate::error::{Error, Result};

const ARTICLE_FIELDS: &[&str] = &["id", "title", "description", "source", "engagement", "veracity"];
const SERIES_FIELDS: &[&str] = &["id", "veracity", "tweets"];
const TWEET_FIELDS: &[&str] = &[
    "id",
    "text",
    "timestamp",
    "followers",
    "following",
    "verified",
    "likes",
];

/// Loader switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Accept descriptions that are empty after trimming.
    pub allow_empty_description: bool,
}

pub fn load_articles(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Vec<Article>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_articles(&text, path, opts)
}

pub fn load_tweet_series(path: impl AsRef<Path>) -> Result<Vec<TweetSeries>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tweet_series(&text, path)
}

/// Replaces absolute timestamps by delays from the earliest one.
/// The input is sorted first; ties are kept.
pub fn normalize_timestamps(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::Validation("cannot normalize an empty timestamp list".into()));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(f64::total_cmp);
    let origin = sorted[0];
    Ok(sorted.into_iter().map(|t| t - origin).collect())
}

struct LineCtx<'a> {
    origin: &'a Path,
    line: usize,
    warned: &'a mut BTreeSet<String>,
}

impl LineCtx<'_> {
    fn parse_err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.origin, self.line, msg)
    }

    fn invalid(&self, msg: impl std::fmt::Display) -> Error {
        Error::Validation(format!("{}:{}: {}", self.origin.display(), self.line, msg))
    }

    fn warn_unknown(&mut self, obj: &Map<String, Value>, known: &[&str], what: &str) {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) && self.warned.insert(format!("{what}.{key}")) {
                log::warn!(
                    "{}:{}: ignoring unknown {what} field `{key}`",
                    self.origin.display(),
                    self.line
                );
            }
        }
    }

    fn string(&self, obj: &Map<String, Value>, key: &str) -> Result<String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) if key == "id" => Ok(n.to_string()),
            Some(_) => Err(self.parse_err(format!("field `{key}` must be a string"))),
            None => Err(self.parse_err(format!("missing field `{key}`"))),
        }
    }

    fn count(&self, obj: &Map<String, Value>, key: &str) -> Result<u64> {
        let v = obj
            .get(key)
            .ok_or_else(|| self.parse_err(format!("missing field `{key}`")))?;
        match v {
            Value::Number(n) => {
                if let Some(u) = n.as_u64() {
                    Ok(u)
                } else if let Some(i) = n.as_i64() {
                    Err(self.invalid(format!("field `{key}` must be non-negative (got {i})")))
                } else {
                    Err(self.parse_err(format!("field `{key}` must be an integer (got {n})")))
                }
            }
            Value::String(s) => match s.trim().parse::<i64>() {
                Ok(i) if i >= 0 => Ok(i as u64),
                Ok(i) => Err(self.invalid(format!("field `{key}` must be non-negative (got {i})"))),
                Err(_) => Err(self.parse_err(format!("field `{key}` is not an integer: {s:?}"))),
            },
            _ => Err(self.parse_err(format!("field `{key}` must be an integer"))),
        }
    }

    fn binary(&self, v: &Value, key: &str) -> Result<bool> {
        match v {
            Value::Bool(b) => Ok(*b),
            Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
            Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
            _ => Err(self.parse_err(format!("field `{key}` must be 0/1 or a boolean (got {v})"))),
        }
    }

    fn optional_binary(&self, obj: &Map<String, Value>, key: &str) -> Result<Option<bool>> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => self.binary(v, key).map(Some),
        }
    }

    fn timestamp(&self, obj: &Map<String, Value>) -> Result<f64> {
        let t = match obj.get("timestamp") {
            Some(Value::Number(n)) => n.as_f64(),
            Some(Value::String(s)) => s.trim().parse::<f64>().ok(),
            Some(_) => None,
            None => return Err(self.parse_err("missing field `timestamp`")),
        };
        match t {
            Some(t) if t.is_finite() => Ok(t),
            _ => Err(self.parse_err(format!(
                "unparseable timestamp {}",
                obj.get("timestamp").map(|v| v.to_string()).unwrap_or_default()
            ))),
        }
    }
}

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn object(ctx: &LineCtx<'_>, line: &str) -> Result<Map<String, Value>> {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ctx.parse_err("record is not an object")),
        Err(e) => Err(ctx.parse_err(format!("malformed record: {e}"))),
    }
}

/// Parses line-delimited article records. `origin` only labels errors.
pub fn parse_articles(text: &str, origin: &Path, opts: &LoadOptions) -> Result<Vec<Article>> {
    let mut warned = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, raw) in records(text) {
        let mut ctx = LineCtx {
            origin,
            line,
            warned: &mut warned,
        };
        let obj = object(&ctx, raw)?;
        ctx.warn_unknown(&obj, ARTICLE_FIELDS, "article");
        let article = Article {
            id: ctx.string(&obj, "id")?,
            title: ctx.string(&obj, "title")?,
            description: ctx.string(&obj, "description")?,
            source: ctx.string(&obj, "source")?,
            engagement: ctx.count(&obj, "engagement")?,
            veracity: ctx.optional_binary(&obj, "veracity")?,
        };
        if article.title.trim().is_empty() {
            return Err(ctx.invalid(format!("article {}: field `title` is empty", article.id)));
        }
        if !opts.allow_empty_description && article.description.trim().is_empty() {
            return Err(ctx.invalid(format!(
                "article {}: field `description` is empty",
                article.id
            )));
        }
        if !seen.insert(article.id.clone()) {
            return Err(Error::Integrity(format!(
                "{}:{}: duplicate article id {}",
                origin.display(),
                line,
                article.id
            )));
        }
        out.push(article);
    }
    Ok(out)
}

/// Parses line-delimited series records, sorting tweets by timestamp and
/// replacing timestamps with delays.
pub fn parse_tweet_series(text: &str, origin: &Path) -> Result<Vec<TweetSeries>> {
    let mut warned = BTreeSet::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, raw) in records(text) {
        let mut ctx = LineCtx {
            origin,
            line,
            warned: &mut warned,
        };
        let obj = object(&ctx, raw)?;
        ctx.warn_unknown(&obj, SERIES_FIELDS, "series");
        let id = ctx.string(&obj, "id")?;
        let veracity = ctx.optional_binary(&obj, "veracity")?;
        let raw_tweets = match obj.get("tweets") {
            Some(Value::Array(a)) => a,
            Some(_) => return Err(ctx.parse_err("field `tweets` must be an array")),
            None => return Err(ctx.parse_err("missing field `tweets`")),
        };
        if raw_tweets.is_empty() {
            return Err(ctx.invalid(format!("series {id} has no tweets")));
        }

        let mut stamped = Vec::with_capacity(raw_tweets.len());
        let mut tweet_ids = HashSet::new();
        for t in raw_tweets {
            let Value::Object(t) = t else {
                return Err(ctx.parse_err("tweet is not an object"));
            };
            ctx.warn_unknown(t, TWEET_FIELDS, "tweet");
            let timestamp = ctx.timestamp(t)?;
            let verified = match t.get("verified") {
                Some(v) => ctx.binary(v, "verified")?,
                None => return Err(ctx.parse_err("missing field `verified`")),
            };
            let tweet = Tweet {
                id: ctx.string(t, "id")?,
                text: ctx.string(t, "text")?,
                delta_t: 0.0,
                followers: ctx.count(t, "followers")?,
                following: ctx.count(t, "following")?,
                verified,
                likes: ctx.count(t, "likes")?,
            };
            if !tweet_ids.insert(tweet.id.clone()) {
                return Err(Error::Integrity(format!(
                    "{}:{}: duplicate tweet id {} within series {id}",
                    origin.display(),
                    line,
                    tweet.id
                )));
            }
            stamped.push((timestamp, tweet));
        }
        // stable: simultaneous tweets keep file order
        stamped.sort_by(|a, b| a.0.total_cmp(&b.0));
        let stamps: Vec<f64> = stamped.iter().map(|(t, _)| *t).collect();
        let deltas = normalize_timestamps(&stamps)?;
        let tweets = stamped
            .into_iter()
            .zip(deltas)
            .map(|((_, mut tweet), dt)| {
                tweet.delta_t = dt;
                tweet
            })
            .collect();

        if !seen.insert(id.clone()) {
            return Err(Error::Integrity(format!(
                "{}:{}: duplicate series id {id}",
                origin.display(),
                line
            )));
        }
        out.push(TweetSeries {
            id,
            tweets,
            veracity,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct ArticleRecord<'a> {
    id: &'a str,
    title: &'a str,
    description: &'a str,
    source: &'a str,
    engagement: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    veracity: Option<u8>,
}

#[derive(Serialize)]
struct TweetRecord<'a> {
    id: &'a str,
    text: &'a str,
    timestamp: f64,
    followers: u64,
    following: u64,
    verified: u8,
    likes: u64,
}

#[derive(Serialize)]
struct SeriesRecord<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    veracity: Option<u8>,
    tweets: Vec<TweetRecord<'a>>,
}

pub(crate) fn articles_to_string(articles: &[Article]) -> String {
    let mut out = String::new();
    for a in articles {
        let rec = ArticleRecord {
            id: &a.id,
            title: &a.title,
            description: &a.description,
            source: &a.source,
            engagement: a.engagement,
            veracity: a.veracity.map(u8::from),
        };
        out.push_str(&serde_json::to_string(&rec).expect("article record serializes"));
        out.push('\n');
    }
    out
}

/// Series are written with `timestamp = delta_t`, which reloads to the same
/// delays.
pub(crate) fn series_to_string(series: &[TweetSeries]) -> String {
    let mut out = String::new();
    for s in series {
        let rec = SeriesRecord {
            id: &s.id,
            veracity: s.veracity.map(u8::from),
            tweets: s
                .tweets
                .iter()
                .map(|t| TweetRecord {
                    id: &t.id,
                    text: &t.text,
                    timestamp: t.delta_t,
                    followers: t.followers,
                    following: t.following,
                    verified: u8::from(t.verified),
                    likes: t.likes,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("series record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_articles(path: impl AsRef<Path>, articles: &[Article]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, articles_to_string(articles)).map_err(|e| Error::io(path, e))
}

pub fn write_tweet_series(path: impl AsRef<Path>, series: &[TweetSeries]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, series_to_string(series)).map_err(|e| Error::io(path, e))
}
