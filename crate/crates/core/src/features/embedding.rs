use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable map from item id to a fixed-width vector.
///
/// On disk: a header line `dim=<d> count=<n>` followed by one
/// `id<TAB>v1,v2,...` record per line.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        let mut store = EmbeddingStore {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        };
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::Validation(format!(
                    "embedding for {id} has length {} (store dim {dim})",
                    v.len()
                )));
            }
            if store.index.insert(id.clone(), store.ids.len()).is_some() {
                return Err(Error::Integrity(format!("duplicate embedding id {id}")));
            }
            store.ids.push(id);
            store.data.extend_from_slice(&v);
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn lookup(&self, id: &str) -> Result<&[f64]> {
        self.get(id)
            .ok_or_else(|| Error::MissingEmbedding(vec![id.to_string()]))
    }

    /// Ids from `wanted` absent from the store, deduplicated, in first-seen order.
    pub fn missing<'a>(&self, wanted: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let mut seen = HashSet::new();
        wanted
            .into_iter()
            .filter(|id| !self.index.contains_key(*id) && seen.insert(*id))
            .map(str::to_string)
            .collect()
    }

    pub fn ensure_covers<'a>(&self, wanted: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let missing = self.missing(wanted);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingEmbedding(missing))
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} count={}\n", self.dim, self.len());
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            out.push('\t');
            for (j, x) in self.data[i * self.dim..(i + 1) * self.dim].iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty embedding file"))?;
        let (dim, count) = parse_header(header).ok_or_else(|| {
            Error::parse(origin, 1, format!("expected header `dim=<d> count=<n>`, got {header:?}"))
        })?;
        let mut entries = Vec::with_capacity(count);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(origin, lineno, "missing tab separator"))?;
            let v = values
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::parse(origin, lineno, format!("bad float: {e}")))?;
            if v.len() != dim {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("row has {} values, header says dim={dim}", v.len()),
                ));
            }
            entries.push((id.to_string(), v));
        }
        if entries.len() != count {
            return Err(Error::Integrity(format!(
                "{}: header count={count} but {} rows present",
                origin.display(),
                entries.len()
            )));
        }
        Self::from_entries(dim, entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(bad) = self.ids.iter().find(|id| id.contains(['\t', '\n', '\r'])) {
            return Err(Error::Validation(format!(
                "embedding id {bad:?} contains a tab or newline"
            )));
        }
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut dim = None;
    let mut count = None;
    for part in line.split_whitespace() {
        let (k, v) = part.split_once('=')?;
        match k {
            "dim" => dim = v.parse().ok(),
            "count" => count = v.parse().ok(),
            _ => return None,
        }
    }
    Some((dim.filter(|&d| d > 0)?, count?))
}

/// Anything that turns texts into vectors.
pub trait EmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub url: String,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP client for an external embedding endpoint:
/// `POST {texts: [string]}` answered by `{vectors: [[float]]}`.
pub struct EmbeddingService {
    config: ServiceConfig,
    agent: ureq::Agent,
}

impl EmbeddingService {
    pub fn new(config: ServiceConfig) -> Result<Self> {
        if config.batch_size == 0 {
            return Err(Error::Config("embedding service batch_size must be positive".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .into();
        Ok(EmbeddingService { config, agent })
    }

    pub fn batch_size(&self) -> usize {
        self.config.batch_size
    }
}

impl EmbeddingProvider for EmbeddingService {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size) {
            let mut resp = self
                .agent
                .post(&self.config.url)
                .send_json(&EmbedRequest { texts: chunk })
                .map_err(|e| Error::Service(e.to_string()))?;
            let body: EmbedResponse = resp
                .body_mut()
                .read_json()
                .map_err(|e| Error::Service(format!("bad response body: {e}")))?;
            if body.vectors.len() != chunk.len() {
                return Err(Error::Service(format!(
                    "requested {} vectors, received {}",
                    chunk.len(),
                    body.vectors.len()
                )));
            }
            out.extend(body.vectors);
        }
        Ok(out)
    }
}

/// Embeds `(key, text)` pairs; repeated keys are embedded once.
pub fn embed_texts(
    pairs: &[(String, String)],
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingStore> {
    let mut seen = HashSet::new();
    let unique: Vec<&(String, String)> = pairs.iter().filter(|(k, _)| seen.insert(k)).collect();
    let texts: Vec<String> = unique.iter().map(|(_, t)| t.clone()).collect();
    let vectors = provider.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::Service(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            texts.len()
        )));
    }
    let dim = vectors.first().map_or(0, Vec::len);
    EmbeddingStore::from_entries(
        dim,
        unique.into_iter().map(|(k, _)| k.clone()).zip(vectors),
    )
}

/// Loads the cached store at `path` when it covers every key; otherwise embeds
/// through `provider` and writes the cache so later runs work offline.
pub fn load_or_embed(
    path: impl AsRef<Path>,
    pairs: &[(String, String)],
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    if path.exists() {
        let store = EmbeddingStore::load(path)?;
        if store.missing(pairs.iter().map(|(k, _)| k.as_str())).is_empty() {
            return Ok(store);
        }
        log::info!("{}: cache incomplete, re-embedding", path.display());
    }
    let store = embed_texts(pairs, provider)?;
    store.write(path)?;
    Ok(store)
}
