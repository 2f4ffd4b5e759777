//! Natural language interface to relational databases built around a
//! neural sequence-to-sequence parser that learns from user feedback.

pub mod anonymize;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod executor;
pub mod fixtures;
pub mod fsutil;
pub mod learner;
pub mod model;
pub mod paraphrase;
pub mod schema;
pub mod service;
pub mod stopwords;
pub mod template;
pub mod text;
pub mod tfidf;

pub use error::{Error, Result};
