use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const START: &str = "<s>";
pub const END: &str = "</s>";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const START_ID: usize = 0;
pub const END_ID: usize = 1;

/// Source and target token inventories.
///
/// Source words seen only once in training map to UNK; every target SQL
/// token is kept so rare columns remain generable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub source: Vec<String>,
    pub target: Vec<String>,
    #[serde(skip)]
    source_index: HashMap<String, usize>,
    #[serde(skip)]
    target_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_lists(source: Vec<String>, target: Vec<String>) -> Vocabulary {
        let source_index = source.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let target_index = target.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            source,
            target,
            source_index,
            target_index,
        }
    }

    /// Rebuilds lookup tables after deserialization.
    pub fn reindexed(self) -> Vocabulary {
        Vocabulary::from_lists(self.source, self.target)
    }

    pub fn build(dataset: &[Example]) -> Result<Vocabulary> {
        Vocabulary::build_with_min_count(dataset, 2)
    }

    pub fn build_with_min_count(dataset: &[Example], min_count: usize) -> Result<Vocabulary> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut targets: BTreeMap<String, ()> = BTreeMap::new();
        for ex in dataset {
            for w in &ex.utterance {
                *counts.entry(w.as_str()).or_default() += 1;
            }
            for t in ex.target_tokens() {
                targets.insert(t, ());
            }
        }
        let mut source = vec![PAD.to_string(), UNK.to_string()];
        source.extend(
            counts
                .into_iter()
                .filter(|&(w, c)| c >= min_count && w != PAD && w != UNK)
                .map(|(w, _)| w.to_string()),
        );
        let mut target = vec![START.to_string(), END.to_string()];
        target.extend(targets.into_keys().filter(|t| t != START && t != END));
        Ok(Vocabulary::from_lists(source, target))
    }

    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    pub fn target_len(&self) -> usize {
        self.target.len()
    }

    pub fn source_id(&self, word: &str) -> usize {
        self.source_index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn target_id(&self, token: &str) -> Option<usize> {
        self.target_index.get(token).copied()
    }

    pub fn encode_source<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.source_id(w.as_ref())).collect()
    }

    /// Target ids followed by END; `None` if any token is out of vocabulary.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S]) -> Option<Vec<usize>> {
        let mut out: Vec<usize> = tokens
            .iter()
            .map(|t| self.target_id(t.as_ref()))
            .collect::<Option<_>>()?;
        out.push(END_ID);
        Some(out)
    }

    pub fn decode_target(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != START_ID && i != END_ID)
            .map(|&i| self.target[i].clone())
            .collect()
    }
}
