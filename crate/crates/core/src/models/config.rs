use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{NUMERIC_FEATURES, PROJECTION_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "mlp")]
    Mlp,
    #[serde(rename = "mlp+source_emb")]
    MlpSourceEmb,
    #[serde(rename = "mlp+avg_eng")]
    MlpAvgEng,
    #[serde(rename = "mlp+gating")]
    MlpGating,
    #[serde(rename = "rnn")]
    Rnn,
    #[serde(rename = "gru")]
    Gru,
    #[serde(rename = "lstm")]
    Lstm,
    #[serde(rename = "cnn")]
    Cnn,
    #[serde(rename = "transformer")]
    Transformer,
    #[serde(rename = "dummy_stratified")]
    DummyStratified,
    #[serde(rename = "linear")]
    Linear,
    #[serde(rename = "tree_ensemble")]
    TreeEnsemble,
}

impl Family {
    pub const ALL: [Family; 12] = [
        Family::Mlp,
        Family::MlpSourceEmb,
        Family::MlpAvgEng,
        Family::MlpGating,
        Family::Rnn,
        Family::Gru,
        Family::Lstm,
        Family::Cnn,
        Family::Transformer,
        Family::DummyStratified,
        Family::Linear,
        Family::TreeEnsemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Mlp => "mlp",
            Family::MlpSourceEmb => "mlp+source_emb",
            Family::MlpAvgEng => "mlp+avg_eng",
            Family::MlpGating => "mlp+gating",
            Family::Rnn => "rnn",
            Family::Gru => "gru",
            Family::Lstm => "lstm",
            Family::Cnn => "cnn",
            Family::Transformer => "transformer",
            Family::DummyStratified => "dummy_stratified",
            Family::Linear => "linear",
            Family::TreeEnsemble => "tree_ensemble",
        }
    }

    /// Article-side heads that consume one vector per item.
    pub fn is_article_head(self) -> bool {
        matches!(
            self,
            Family::Mlp | Family::MlpSourceEmb | Family::MlpAvgEng | Family::MlpGating
        )
    }

    pub fn is_sequence(self) -> bool {
        matches!(
            self,
            Family::Rnn | Family::Gru | Family::Lstm | Family::Cnn | Family::Transformer
        )
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Family::Rnn | Family::Gru | Family::Lstm)
    }

    pub fn is_baseline(self) -> bool {
        matches!(
            self,
            Family::DummyStratified | Family::Linear | Family::TreeEnsemble
        )
    }

    pub fn is_neural(self) -> bool {
        !self.is_baseline()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

/// Which per-tweet signals reach a sequence model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputView {
    All,
    TextOnly,
    NumericOnly,
}

impl InputView {
    pub fn uses_text(self) -> bool {
        matches!(self, InputView::All | InputView::TextOnly)
    }

    pub fn uses_numeric(self) -> bool {
        matches!(self, InputView::All | InputView::NumericOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            InputView::All => "all",
            InputView::TextOnly => "text_only",
            InputView::NumericOnly => "numeric_only",
        }
    }
}

impl fmt::Display for InputView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Widths {
    /// Hidden width of every two-layer head and of the gated fusion.
    pub head: usize,
    /// Units per direction.
    pub recurrent: usize,
    pub cnn_channels: usize,
    pub model: usize,
    pub heads: usize,
    pub ffn: usize,
    pub projection: usize,
    pub source_emb: usize,
}

impl Widths {
    /// Full-size architecture widths.
    pub fn standard() -> Self {
        Widths {
            head: 256,
            recurrent: 128,
            cnn_channels: 128,
            model: 256,
            heads: 8,
            ffn: 512,
            projection: PROJECTION_WIDTH,
            source_emb: 16,
        }
    }

    /// Small sizes for tests and quick synthetic runs.
    pub fn tiny() -> Self {
        Widths {
            head: 8,
            recurrent: 6,
            cnn_channels: 6,
            model: 8,
            heads: 2,
            ffn: 12,
            projection: 4,
            source_emb: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    /// Article heads: length of the item vector. Sequence models: text
    /// embedding dimension per tweet.
    pub input_dim: usize,
    pub view: InputView,
    /// Padded series length; unused by article heads.
    pub max_len: usize,
    /// Source vocabulary rows including the unknown row 0.
    pub source_rows: usize,
    pub widths: Widths,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(family: Family, input_dim: usize, widths: Widths, seed: u64) -> Self {
        ModelConfig {
            family,
            input_dim,
            view: InputView::All,
            max_len: 0,
            source_rows: 1,
            widths,
            dropout: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        let w = &self.widths;
        let dims = [
            ("head", w.head),
            ("recurrent", w.recurrent),
            ("cnn_channels", w.cnn_channels),
            ("model", w.model),
            ("heads", w.heads),
            ("ffn", w.ffn),
            ("projection", w.projection),
            ("source_emb", w.source_emb),
            ("source_rows", self.source_rows),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return bad(format!("width `{name}` must be positive"));
        }
        if self.input_dim == 0 && (self.family.is_article_head() || self.view.uses_text()) {
            return bad("input_dim must be positive".into());
        }
        if self.family.is_sequence() {
            if self.max_len == 0 {
                return bad("max_len must be positive for sequence models".into());
            }
            if self.family == Family::Transformer && w.model % w.heads != 0 {
                return bad(format!(
                    "model width {} is not divisible by {} heads",
                    w.model, w.heads
                ));
            }
        }
        Ok(())
    }

    /// Width of one time step after the view is applied.
    pub fn step_width(&self) -> usize {
        let mut w = 0;
        if self.view.uses_text() {
            w += self.input_dim;
        }
        if self.view.uses_numeric() {
            w += self.widths.projection;
        }
        w
    }

    /// Width of the mean-pooled vector classical baselines see for series.
    pub fn pooled_width(&self) -> usize {
        let mut w = 0;
        if self.view.uses_text() {
            w += self.input_dim;
        }
        if self.view.uses_numeric() {
            w += NUMERIC_FEATURES;
        }
        w
    }
}
