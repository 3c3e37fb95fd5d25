use sha2::{Digest, Sha256};

use crate::corpus::{
    generate_synthetic_corpus, load_articles, load_tweet_series, Corpus, CorpusShape, LoadOptions,
};
use crate::error::{Error, Result};
use crate::evaluation::{FoldData, FoldSplit};
use crate::features::{
    article_text, series_features, EmbeddingStore, NumericTransform, SourceStats, SourceVocab,
    NUMERIC_FEATURES,
};
use crate::labeling::{fit_labels, imbalance_diagnostics, ImbalanceReport, LabelRule, Labeling};
use crate::models::{Batch, ModelConfig, Tensor};

use super::config::{DataConfig, LabelConfig};

/// A labeled corpus with full embedding coverage.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub corpus: Corpus,
    pub store: EmbeddingStore,
    pub labeling: Labeling,
    pub labels: Vec<bool>,
    pub imbalance: ImbalanceReport,
    /// SHA-256 over the canonical corpus and embedding text.
    pub hash: String,
}

pub(crate) fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

impl Dataset {
    pub fn load(data: &DataConfig, labels: &LabelConfig) -> Result<Self> {
        let (corpus, store) = match data {
            DataConfig::Synthetic { synthetic } => {
                let s = generate_synthetic_corpus(synthetic)?;
                (s.corpus, s.store)
            }
            DataConfig::Files {
                corpus_path,
                corpus_shape,
                embeddings_path,
                allow_empty_description,
            } => {
                let corpus = match corpus_shape {
                    CorpusShape::Article => Corpus::Articles(load_articles(
                        corpus_path,
                        &LoadOptions {
                            allow_empty_description: *allow_empty_description,
                        },
                    )?),
                    CorpusShape::Series => Corpus::Series(load_tweet_series(corpus_path)?),
                };
                (corpus, EmbeddingStore::load(embeddings_path)?)
            }
        };
        Dataset::from_parts(corpus, store, &labels.rule())
    }

    pub fn from_parts(corpus: Corpus, store: EmbeddingStore, rule: &LabelRule) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Validation("corpus is empty".into()));
        }
        let keys = corpus.embedding_keys();
        store.ensure_covers(keys.iter().map(String::as_str))?;
        let labeling = fit_labels(&corpus, rule)?;
        let labels = labeling.labels();
        let imbalance = imbalance_diagnostics(&labels)?;
        let hash = sha256_hex(&[corpus.to_canonical().as_bytes(), store.to_text().as_bytes()]);
        Ok(Dataset {
            corpus,
            store,
            labeling,
            labels,
            imbalance,
            hash,
        })
    }

    /// Same corpus and labels with another embedding store.
    pub fn with_store(&self, store: EmbeddingStore) -> Result<Self> {
        let keys = self.corpus.embedding_keys();
        store.ensure_covers(keys.iter().map(String::as_str))?;
        let hash = sha256_hex(&[self.corpus.to_canonical().as_bytes(), store.to_text().as_bytes()]);
        Ok(Dataset {
            store,
            hash,
            ..self.clone()
        })
    }

    pub fn shape(&self) -> CorpusShape {
        self.corpus.shape()
    }

    /// SHA-256 of the held-out ids of a split, one per line.
    pub fn fold_hash(&self, split: &FoldSplit) -> String {
        let ids = self.corpus.ids();
        let joined: Vec<&str> = split.heldout.iter().map(|&i| ids[i]).collect();
        sha256_hex(&[joined.join("\n").as_bytes()])
    }
}

/// Batches and model config for one fold. Feature statistics are fitted on
/// the training part only.
#[derive(Debug, Clone)]
pub struct PreparedFold {
    pub data: FoldData,
    pub config: ModelConfig,
    /// `[items, features]` for article vectors, `[items, len, step width]`
    /// for series.
    pub input_shape: Vec<usize>,
    pub diagnostics: Vec<String>,
}

pub fn prepare_fold(ds: &Dataset, split: &FoldSplit, base: &ModelConfig) -> Result<PreparedFold> {
    let mut config = base.clone();
    let mut diagnostics = Vec::new();
    let (train, heldout) = match &ds.corpus {
        Corpus::Articles(articles) => {
            let train_items = split.train.iter().map(|&i| &articles[i]);
            let stats = SourceStats::fit(train_items.clone());
            let vocab = SourceVocab::fit(train_items);
            config.source_rows = vocab.rows();
            config.input_dim = 2 * ds.store.dim();
            let build = |idx: &[usize]| -> Result<(Batch, usize)> {
                let d = 2 * ds.store.dim();
                let mut x = Tensor::zeros(idx.len(), d);
                let mut source = Vec::with_capacity(idx.len());
                let mut eng = Vec::with_capacity(idx.len());
                let mut unseen = 0;
                for (r, &i) in idx.iter().enumerate() {
                    let a = &articles[i];
                    x.row_mut(r).copy_from_slice(&article_text(a, &ds.store)?);
                    let (row, known) = vocab.lookup(&a.source);
                    let (feature, fallback) = stats.feature(&a.source);
                    if !known || fallback {
                        unseen += 1;
                    }
                    source.push(row);
                    eng.push(feature);
                }
                Ok((Batch::Vectors { x, source, eng }, unseen))
            };
            let (train, _) = build(&split.train)?;
            let (heldout, unseen) = build(&split.heldout)?;
            if unseen > 0 {
                diagnostics.push(format!(
                    "{unseen} held-out articles have sources unseen in training; they use the unknown row and the global mean"
                ));
            }
            (train, heldout)
        }
        Corpus::Series(series) => {
            let len = config.max_len;
            let transform = NumericTransform::fit(split.train.iter().flat_map(|&i| {
                let mut tweets: Vec<_> = series[i].tweets.iter().collect();
                tweets.sort_by(|a, b| a.delta_t.total_cmp(&b.delta_t));
                tweets.truncate(len);
                tweets
            }))?;
            diagnostics.extend(transform.diagnostics.iter().cloned());
            config.input_dim = ds.store.dim();
            let d = ds.store.dim();
            let build = |idx: &[usize]| -> Result<Batch> {
                let rows = idx.len() * len;
                let mut text = Tensor::zeros(rows, d);
                let mut numeric = Tensor::zeros(rows, NUMERIC_FEATURES);
                let mut mask = Vec::with_capacity(rows);
                for (b, &i) in idx.iter().enumerate() {
                    let f = series_features(&series[i], len, &ds.store, &transform)?;
                    text.data[b * len * d..(b + 1) * len * d].copy_from_slice(&f.text);
                    numeric.data[b * len * NUMERIC_FEATURES..(b + 1) * len * NUMERIC_FEATURES]
                        .copy_from_slice(&f.numeric);
                    mask.extend(f.mask.iter().map(|&m| m > 0.0));
                }
                Ok(Batch::Series {
                    len,
                    text,
                    numeric,
                    mask,
                })
            };
            (build(&split.train)?, build(&split.heldout)?)
        }
    };
    let input_shape = match &train {
        Batch::Vectors { x, .. } => vec![x.rows, x.cols],
        Batch::Series { len, .. } => {
            let width = if config.family.is_neural() {
                config.step_width()
            } else {
                config.pooled_width()
            };
            vec![train.size(), *len, width]
        }
    };
    Ok(PreparedFold {
        data: FoldData {
            index: split.index,
            train,
            train_labels: split.train.iter().map(|&i| ds.labels[i]).collect(),
            heldout,
            heldout_labels: split.heldout.iter().map(|&i| ds.labels[i]).collect(),
        },
        config,
        input_shape,
        diagnostics,
    })
}
