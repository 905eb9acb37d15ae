//! Lexical complexity prediction: corpus statistics, feature extraction,
//! gradient-boosted regression and ensembling.

pub mod attention_probe;
pub mod complex_data;
pub mod config;
pub mod corpus_index;
pub mod ensemble_eval;
pub mod error;
pub mod feature_pipeline;
pub mod phonetics;
pub mod record;
pub mod regressors;
pub mod semantics;
pub mod stats;
pub mod surface;
pub mod syntax;
pub mod tokenize;
pub mod workflow;

pub use error::{Error, Result};
