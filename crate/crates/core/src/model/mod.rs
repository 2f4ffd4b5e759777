//! Attention-based encoder-decoder that maps anonymized utterances to SQL tokens.

pub mod baseline;
pub mod beam;
pub mod checkpoint;
pub mod network;
pub mod params;
pub mod pretrained;
pub mod tensor;
pub mod train;
pub mod vocab;

use std::path::Path;

use serde::Serialize;

pub use baseline::{nearest_neighbor_predict, NearestNeighbor};
pub use beam::{beam_search, greedy_decode, BeamHypothesis};
pub use params::{Dims, ModelParameters};
pub use pretrained::PretrainedEmbeddings;
pub use train::{train, train_with, EpochReport, TrainConfig};
pub use vocab::Vocabulary;

use crate::anonymize::{deanonymize, AnonymizedUtterance, EntityIndex};
use crate::error::{Error, Result};
use crate::text;

/// A trained parser: vocabulary, configuration, and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq {
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub params: ModelParameters,
}

/// Result of deanonymizing the best hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictOutcome {
    Sql { sql: String },
    /// The decoder emitted placeholders that the utterance never bound.
    IncorrectTypes { unbound: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub utterance: AnonymizedUtterance,
    /// Decoded anonymized SQL text.
    pub anonymized_sql: String,
    pub outcome: PredictOutcome,
    /// One row per decoded token (END included), one column per source token.
    pub attention: Vec<Vec<f64>>,
    pub log_prob: f64,
    pub truncated: bool,
}

impl Prediction {
    pub fn sql(&self) -> Option<&str> {
        match &self.outcome {
            PredictOutcome::Sql { sql } => Some(sql),
            PredictOutcome::IncorrectTypes { .. } => None,
        }
    }
}

impl Seq2Seq {
    /// Beam search over an already anonymized token sequence.
    pub fn decode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<BeamHypothesis> {
        let source = self.vocab.encode_source(tokens);
        let mut hyps = beam::beam_search(&self.params, &source, self.config.beam, self.config.max_decode_len)?;
        Ok(hyps.remove(0))
    }

    /// Decoded anonymized SQL tokens for an anonymized utterance.
    pub fn translate<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<String>> {
        Ok(self.vocab.decode_target(&self.decode(tokens)?.tokens))
    }

    /// Anonymizes `utterance`, decodes it, and fills placeholders back in.
    pub fn predict(&self, index: &EntityIndex, utterance: &str) -> Result<Prediction> {
        let words = text::words(utterance);
        if words.is_empty() {
            return Err(Error::EmptyInput);
        }
        let anon = index.anonymize_utterance(&words);
        let best = self.decode(&anon.tokens)?;
        let tokens = self.vocab.decode_target(&best.tokens);
        let outcome = match deanonymize(&tokens, &anon.map) {
            Ok(sql) => PredictOutcome::Sql { sql },
            Err(Error::UnboundPlaceholders(unbound)) => PredictOutcome::IncorrectTypes { unbound },
            Err(e) => return Err(e),
        };
        Ok(Prediction {
            utterance: anon,
            anonymized_sql: tokens.join(" "),
            outcome,
            attention: best.attention,
            log_prob: best.log_prob,
            truncated: best.truncated,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        checkpoint::save(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Seq2Seq> {
        checkpoint::load(path)
    }
}
