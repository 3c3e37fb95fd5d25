//! Corpus items to model-ready vectors.

mod embedding;
mod fusion;
mod numeric;
mod series;
mod source;

pub use embedding::{
    embed_texts, load_or_embed, EmbeddingProvider, EmbeddingService, EmbeddingStore,
    ServiceConfig,
};
pub use fusion::{gated_fusion, gated_fusion_parts, FusionParams, FusionParts};
pub use numeric::{NumericProjection, NumericTransform, NUMERIC_FEATURES, PROJECTION_WIDTH};
pub use series::{build_series_input, encode_tweet, series_features, SeriesFeatures, SeriesInput};
pub use source::{article_text, concat_with_source_feature, SourceStats, SourceVocab};
