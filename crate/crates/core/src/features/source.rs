use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{description_key, title_key, Article};
use crate::error::Result;

use super::EmbeddingStore;

/// `[title embedding ; description embedding]`.
pub fn article_text(article: &Article, store: &EmbeddingStore) -> Result<Vec<f64>> {
    let mut v = store.lookup(&title_key(&article.id))?.to_vec();
    v.extend_from_slice(store.lookup(&description_key(&article.id))?);
    Ok(v)
}

pub fn concat_with_source_feature(text: &[f64], feature: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(text.len() + feature.len());
    v.extend_from_slice(text);
    v.extend_from_slice(feature);
    v
}

/// Mean `log(1 + engagement)` per source over training articles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub per_source: BTreeMap<String, f64>,
    pub global_mean: f64,
}

impl SourceStats {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a Article>) -> Self {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let (mut total, mut n) = (0.0, 0usize);
        for a in train {
            let x = (a.engagement as f64).ln_1p();
            let e = acc.entry(a.source.clone()).or_default();
            e.0 += x;
            e.1 += 1;
            total += x;
            n += 1;
        }
        SourceStats {
            per_source: acc
                .into_iter()
                .map(|(k, (s, c))| (k, s / c as f64))
                .collect(),
            global_mean: if n > 0 { total / n as f64 } else { 0.0 },
        }
    }

    /// Returns the source mean, or the global mean (and `true`) for unseen
    /// sources.
    pub fn feature(&self, source: &str) -> (f64, bool) {
        match self.per_source.get(source) {
            Some(&m) => (m, false),
            None => (self.global_mean, true),
        }
    }
}

/// Source-to-row index for a learned source embedding. Row 0 is reserved for
/// sources unseen during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceVocab {
    index: HashMap<String, usize>,
}

impl SourceVocab {
    pub fn fit<'a>(train: impl IntoIterator<Item = &'a Article>) -> Self {
        let names: BTreeSet<&str> = train.into_iter().map(|a| a.source.as_str()).collect();
        SourceVocab {
            index: names
                .into_iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i + 1))
                .collect(),
        }
    }

    /// Rows in the embedding table, including the unknown row.
    pub fn rows(&self) -> usize {
        self.index.len() + 1
    }

    pub fn lookup(&self, source: &str) -> (usize, bool) {
        match self.index.get(source) {
            Some(&i) => (i, false),
            None => (0, true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn art(source: &str, engagement: u64) -> Article {
        Article {
            id: format!("{source}-{engagement}"),
            title: "t".into(),
            description: "d".into(),
            source: source.into(),
            engagement,
            veracity: None,
        }
    }

    #[test]
    fn source_mean_on_log_scale() {
        let s = SourceStats::fit(&[art("x", 9), art("x", 99)]);
        let expect = (10f64.ln() + 100f64.ln()) / 2.0;
        assert!((s.feature("x").0 - expect).abs() < 1e-12);
    }

    #[test]
    fn unseen_source_falls_back() {
        let s = SourceStats::fit(&[art("x", 9), art("y", 0)]);
        let (v, fallback) = s.feature("z");
        assert!(fallback);
        assert_eq!(v, s.global_mean);
        let vocab = SourceVocab::fit(&[art("x", 1), art("y", 1)]);
        assert_eq!(vocab.rows(), 3);
        assert_eq!(vocab.lookup("z"), (0, true));
        assert_eq!(vocab.lookup("y"), (2, false));
    }

    #[test]
    fn scalar_concat_length() {
        let v = concat_with_source_feature(&vec![0.0; 1536], &[4.2]);
        assert_eq!(v.len(), 1537);
        assert_eq!(v[1536], 4.2);
    }
}
