use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::Corpus;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub item_id: String,
    pub rule: String,
    pub detail: String,
}

/// Every invariant violation found in a corpus; empty iff the corpus is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, item_id: &str, rule: &str, detail: impl Into<String>) {
        self.violations.push(Violation {
            item_id: item_id.to_string(),
            rule: rule.to_string(),
            detail: detail.into(),
        });
    }

    /// One JSON `{item_id, rule, detail}` record per line.
    pub fn to_jsonl(&self) -> String {
        self.violations
            .iter()
            .map(|v| serde_json::to_string(v).expect("violation serializes") + "\n")
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "corpus valid");
        }
        for v in &self.violations {
            writeln!(f, "{}\t{}\t{}", v.item_id, v.rule, v.detail)?;
        }
        Ok(())
    }
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for id in corpus.ids() {
        *counts.entry(id).or_default() += 1;
    }
    let mut reported = HashSet::new();
    for id in corpus.ids() {
        let n = counts[id];
        if n > 1 && reported.insert(id) {
            report.push(id, "duplicate_id", format!("id appears {n} times"));
        }
    }

    match corpus {
        Corpus::Articles(articles) => {
            for a in articles {
                if a.title.trim().is_empty() {
                    report.push(&a.id, "empty_title", "title is empty after trim");
                }
                if a.description.trim().is_empty() {
                    report.push(&a.id, "empty_description", "description is empty after trim");
                }
            }
        }
        Corpus::Series(series) => {
            for s in series {
                let Some(first) = s.tweets.first() else {
                    report.push(&s.id, "empty_series", "series has no tweets");
                    continue;
                };
                if first.delta_t != 0.0 {
                    report.push(
                        &s.id,
                        "delta_t_origin",
                        format!("first tweet has delta_t {} (expected 0)", first.delta_t),
                    );
                }
                for (j, t) in s.tweets.iter().enumerate() {
                    if !(t.delta_t >= 0.0) {
                        report.push(&s.id, "negative_delta_t", format!("tweet {} has delta_t {}", t.id, t.delta_t));
                    }
                    if j > 0 && t.delta_t < s.tweets[j - 1].delta_t {
                        report.push(
                            &s.id,
                            "delta_t_order",
                            format!("tweet {} precedes its predecessor in time", t.id),
                        );
                    }
                }
                let mut ids = HashSet::new();
                for t in &s.tweets {
                    if !ids.insert(t.id.as_str()) {
                        report.push(&s.id, "duplicate_tweet_id", format!("tweet id {} repeated", t.id));
                    }
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Article, Tweet, TweetSeries};

    fn article(id: &str) -> Article {
        Article {
            id: id.into(),
            title: "t".into(),
            description: "d".into(),
            source: "s".into(),
            engagement: 3,
            veracity: None,
        }
    }

    fn tweet(id: &str, dt: f64) -> Tweet {
        Tweet {
            id: id.into(),
            text: "x".into(),
            delta_t: dt,
            followers: 0,
            following: 0,
            verified: false,
            likes: 0,
        }
    }

    #[test]
    fn valid_corpus_empty_report() {
        let c = Corpus::Articles(vec![article("a"), article("b")]);
        assert!(validate_corpus(&c).is_valid());
    }

    #[test]
    fn late_origin_flagged() {
        let c = Corpus::Series(vec![TweetSeries {
            id: "s9".into(),
            tweets: vec![tweet("t1", 5.0), tweet("t2", 9.0)],
            veracity: None,
        }]);
        let r = validate_corpus(&c);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].item_id, "s9");
        assert_eq!(r.violations[0].rule, "delta_t_origin");
    }

    #[test]
    fn duplicate_article_flagged() {
        let c = Corpus::Articles(vec![article("a"), article("a")]);
        let r = validate_corpus(&c);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].rule, "duplicate_id");
    }

    #[test]
    fn tweet_ids_may_repeat_across_series() {
        let mk = |id: &str| TweetSeries {
            id: id.into(),
            tweets: vec![tweet("shared", 0.0)],
            veracity: None,
        };
        assert!(validate_corpus(&Corpus::Series(vec![mk("a"), mk("b")])).is_valid());
    }
}
