//! Binary labels from engagement statistics, with recorded provenance.
//!
//! Three rules are supported: a nearest-rank tail percentile over article
//! engagement (`label = engagement >= tau`), a median split over summed likes
//! per series (`label = total > median`, ties negative), and passthrough of the
//! veracity field. Thresholds are fitted once on the whole corpus and stored in
//! every instance's provenance so labels can be re-derived exactly.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, TweetSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Veracity,
    Virality,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Veracity => "veracity",
            Task::Virality => "virality",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    PercentileThreshold,
    MedianSplit,
    Passthrough,
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleKind::PercentileThreshold => "percentile_threshold",
            RuleKind::MedianSplit => "median_split",
            RuleKind::Passthrough => "passthrough",
        })
    }
}

/// A label rule and, once fitted, its resolved threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRule {
    pub task: Task,
    pub rule: RuleKind,
    /// Percentile `p` for [`RuleKind::PercentileThreshold`]; unused otherwise.
    pub parameter: f64,
    pub threshold_value: Option<f64>,
}

impl LabelRule {
    pub fn percentile(p: f64) -> Self {
        LabelRule {
            task: Task::Virality,
            rule: RuleKind::PercentileThreshold,
            parameter: p,
            threshold_value: None,
        }
    }

    pub fn median_split() -> Self {
        LabelRule {
            task: Task::Virality,
            rule: RuleKind::MedianSplit,
            parameter: 0.0,
            threshold_value: None,
        }
    }

    pub fn passthrough() -> Self {
        LabelRule {
            task: Task::Veracity,
            rule: RuleKind::Passthrough,
            parameter: 0.0,
            threshold_value: None,
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.rule == RuleKind::Passthrough || self.threshold_value.is_some()
    }

    /// Checks rule/task/parameter consistency before fitting.
    pub fn check(&self) -> Result<()> {
        match (self.task, self.rule) {
            (Task::Virality, RuleKind::Passthrough) => Err(Error::Config(
                "passthrough labels read the veracity field; use task = veracity".into(),
            )),
            (Task::Veracity, RuleKind::PercentileThreshold | RuleKind::MedianSplit) => Err(
                Error::Config(format!("rule {} derives virality labels, not veracity", self.rule)),
            ),
            (_, RuleKind::PercentileThreshold) if !(self.parameter > 0.0 && self.parameter < 100.0) => {
                Err(Error::Config(format!(
                    "percentile must lie in (0, 100), got {}",
                    self.parameter
                )))
            }
            _ => Ok(()),
        }
    }

    /// Applies an already fitted rule to a corpus without refitting.
    pub fn apply(&self, corpus: &Corpus) -> Result<Vec<bool>> {
        match (self.rule, corpus) {
            (RuleKind::Passthrough, _) => veracity_labels(corpus),
            (RuleKind::PercentileThreshold, Corpus::Articles(a)) => {
                let tau = self.fitted_threshold()?;
                Ok(a.iter().map(|x| x.engagement as f64 >= tau).collect())
            }
            (RuleKind::MedianSplit, Corpus::Series(s)) => {
                let m = self.fitted_threshold()?;
                Ok(s.iter().map(|x| x.total_likes() as f64 > m).collect())
            }
            (rule, c) => Err(Error::Config(format!(
                "rule {rule} does not apply to a {:?} corpus",
                c.shape()
            ))),
        }
    }

    fn fitted_threshold(&self) -> Result<f64> {
        self.threshold_value
            .ok_or_else(|| Error::Validation(format!("rule {} has not been fitted", self.rule)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub item_id: String,
    pub label: bool,
    pub provenance: LabelRule,
}

/// Labels plus any diagnostics raised while deriving them.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub rule: LabelRule,
    pub instances: Vec<LabeledInstance>,
    pub diagnostics: Vec<String>,
}

impl Labeling {
    pub fn labels(&self) -> Vec<bool> {
        self.instances.iter().map(|i| i.label).collect()
    }

    pub fn prevalence(&self) -> f64 {
        prevalence(&self.labels())
    }

    fn build(rule: LabelRule, ids: Vec<&str>, labels: Vec<bool>, diagnostics: Vec<String>) -> Self {
        let instances = ids
            .into_iter()
            .zip(labels)
            .map(|(id, label)| LabeledInstance {
                item_id: id.to_string(),
                label,
                provenance: rule.clone(),
            })
            .collect();
        Labeling {
            rule,
            instances,
            diagnostics,
        }
    }
}

fn prevalence(labels: &[bool]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64
}

/// Nearest-rank percentile: the value at 1-indexed rank `ceil(p/100 * n)` of
/// the sorted input.
pub fn percentile_threshold(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("percentile of an empty value list".into()));
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::Validation(format!("percentile must lie in (0, 100), got {p}")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("percentile input contains non-finite values".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((p * n as f64) / 100.0).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// `label = engagement >= tau` for every article.
pub fn label_by_threshold(articles: &[Article], tau: f64, p: f64) -> Vec<LabeledInstance> {
    let rule = LabelRule {
        threshold_value: Some(tau),
        ..LabelRule::percentile(p)
    };
    articles
        .iter()
        .map(|a| LabeledInstance {
            item_id: a.id.clone(),
            label: a.engagement as f64 >= tau,
            provenance: rule.clone(),
        })
        .collect()
}

/// Fits the `p`-th percentile over all articles and labels the tail viral.
pub fn percentile_labels(articles: &[Article], p: f64) -> Result<Labeling> {
    let values: Vec<f64> = articles.iter().map(|a| a.engagement as f64).collect();
    let tau = percentile_threshold(&values, p)?;
    let instances = label_by_threshold(articles, tau, p);
    let labels: Vec<bool> = instances.iter().map(|i| i.label).collect();
    let realized = prevalence(&labels);
    let expected = (100.0 - p) / 100.0;
    let mut diagnostics = Vec::new();
    if labels.iter().all(|&l| l) {
        diagnostics.push(format!(
            "every item is at or above tau = {tau}: constant engagement distribution"
        ));
    } else if realized > 2.0 * expected + 1.0 / labels.len() as f64 {
        diagnostics.push(format!(
            "ties at tau = {tau} inflate prevalence to {realized:.4} (nominal {expected:.4})"
        ));
    }
    Ok(Labeling {
        rule: instances[0].provenance.clone(),
        instances,
        diagnostics,
    })
}

/// Median of summed likes (midpoint of the two central values for even
/// counts); `label = total > median`.
pub fn median_split_labels(series: &[TweetSeries]) -> Result<Labeling> {
    if series.is_empty() {
        return Err(Error::Validation("median split over an empty collection".into()));
    }
    let totals: Vec<f64> = series.iter().map(|s| s.total_likes() as f64).collect();
    let m = median(&totals);
    let labels: Vec<bool> = totals.iter().map(|&l| l > m).collect();
    let realized = prevalence(&labels);
    let mut diagnostics = Vec::new();
    if realized < 0.4 {
        let ties = totals.iter().filter(|&&l| l == m).count();
        diagnostics.push(format!(
            "degenerate median split: prevalence {realized:.4} with {ties} ties at median {m}"
        ));
    }
    let rule = LabelRule {
        threshold_value: Some(m),
        ..LabelRule::median_split()
    };
    let ids = series.iter().map(|s| s.id.as_str()).collect();
    Ok(Labeling::build(rule, ids, labels, diagnostics))
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn veracity_labels(corpus: &Corpus) -> Result<Vec<bool>> {
    let pairs: Vec<(&str, Option<bool>)> = match corpus {
        Corpus::Articles(a) => a.iter().map(|x| (x.id.as_str(), x.veracity)).collect(),
        Corpus::Series(s) => s.iter().map(|x| (x.id.as_str(), x.veracity)).collect(),
    };
    let missing: Vec<&str> = pairs.iter().filter(|p| p.1.is_none()).map(|p| p.0).collect();
    if !missing.is_empty() {
        return Err(Error::Validation(format!(
            "{} item(s) lack a veracity label (first: {})",
            missing.len(),
            missing[0]
        )));
    }
    Ok(pairs.into_iter().map(|p| p.1.unwrap_or(false)).collect())
}

/// Veracity passthrough (1 = fake).
pub fn passthrough_labels(corpus: &Corpus) -> Result<Labeling> {
    let labels = veracity_labels(corpus)?;
    Ok(Labeling::build(LabelRule::passthrough(), corpus.ids(), labels, Vec::new()))
}

/// Fits `rule` on the whole corpus and labels every item.
pub fn fit_labels(corpus: &Corpus, rule: &LabelRule) -> Result<Labeling> {
    rule.check()?;
    if corpus.is_empty() {
        return Err(Error::Validation("cannot label an empty corpus".into()));
    }
    match (rule.rule, corpus) {
        (RuleKind::Passthrough, c) => passthrough_labels(c),
        (RuleKind::PercentileThreshold, Corpus::Articles(a)) => percentile_labels(a, rule.parameter),
        (RuleKind::MedianSplit, Corpus::Series(s)) => median_split_labels(s),
        (r, c) => Err(Error::Config(format!(
            "rule {r} does not apply to a {:?} corpus",
            c.shape()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceReport {
    pub n: usize,
    pub n_positive: usize,
    pub prevalence: f64,
    /// `N_neg / N_pos`; `None` when a class is absent.
    pub pos_weight: Option<f64>,
    /// A stratified guesser has expected precision = recall = prevalence.
    pub expected_dummy_f1: f64,
    pub degenerate: bool,
}

pub fn imbalance_diagnostics(labels: &[bool]) -> Result<ImbalanceReport> {
    if labels.is_empty() {
        return Err(Error::Validation("no labels to diagnose".into()));
    }
    let n = labels.len();
    let n_positive = labels.iter().filter(|&&l| l).count();
    let n_negative = n - n_positive;
    let degenerate = n_positive == 0 || n_negative == 0;
    let p = n_positive as f64 / n as f64;
    Ok(ImbalanceReport {
        n,
        n_positive,
        prevalence: p,
        pos_weight: (!degenerate).then(|| n_negative as f64 / n_positive as f64),
        expected_dummy_f1: p,
        degenerate,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    item_id: String,
    label: u8,
    task: Task,
    rule: RuleKind,
    parameter: f64,
    threshold_value: Option<f64>,
}

pub fn labels_to_string(instances: &[LabeledInstance]) -> String {
    instances
        .iter()
        .map(|i| {
            let rec = LabelRecord {
                item_id: i.item_id.clone(),
                label: u8::from(i.label),
                task: i.provenance.task,
                rule: i.provenance.rule,
                parameter: i.provenance.parameter,
                threshold_value: i.provenance.threshold_value,
            };
            serde_json::to_string(&rec).expect("label record serializes") + "\n"
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, instances: &[LabeledInstance]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, labels_to_string(instances)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabeledInstance>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: LabelRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if rec.label > 1 {
            return Err(Error::parse(path, i + 1, format!("label must be 0 or 1, got {}", rec.label)));
        }
        out.push(LabeledInstance {
            item_id: rec.item_id,
            label: rec.label == 1,
            provenance: LabelRule {
                task: rec.task,
                rule: rec.rule,
                parameter: rec.parameter,
                threshold_value: rec.threshold_value,
            },
        });
    }
    Ok(out)
}
