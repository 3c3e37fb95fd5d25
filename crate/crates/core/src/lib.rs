//! Evaluation harness and model library for fake-news detection and
//! early-virality prediction.
//!
//! The crate treats label design, input view and checkpoint-selection policy
//! as explicit experiment dimensions:
//!
//! - [`corpus`]: article and tweet-series schemas, loaders, validation and a
//!   synthetic generator with planted signal.
//! - [`labeling`]: tail-percentile, median-split and passthrough label rules
//!   with recorded provenance.
//! - [`features`]: embedding stores, per-fold numeric transforms, series
//!   inputs and gated fusion.
//! - [`models`]: MLP heads, recurrent / convolutional / attention encoders and
//!   classical baselines, trained with exact reverse-mode gradients.
//! - [`evaluation`]: weighted BCE, stratified k-fold, epoch selection and the
//!   six-metric report.
//! - [`harness`]: configuration-driven experiments and result tables.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod harness;
pub mod labeling;
pub mod models;

pub use error::{Error, Result};
