//! Training examples and the line-delimited dataset file format.
//!
//! Each line of a dataset file is a JSON object
//! `{"utterance": <text>, "sql": <text>, "provenance": <provenance>}` where
//! provenance is one of `template`, `user-confirmed`, `annotated`, `paraphrase`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anonymize::{anonymize_sql_pair, AnonymizedPair};
use crate::error::Result;
use crate::fsutil;
use crate::schema::Schema;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Template,
    UserConfirmed,
    Annotated,
    Paraphrase,
}

/// An anonymized (utterance, SQL) training pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub utterance: Vec<String>,
    /// Canonical anonymized SQL.
    pub sql: String,
    pub provenance: Provenance,
}

impl Example {
    pub fn new(utterance: Vec<String>, sql: impl AsRef<str>, provenance: Provenance) -> Self {
        Example {
            utterance,
            sql: text::canonical_sql(sql.as_ref()),
            provenance,
        }
    }

    pub fn from_pair(pair: &AnonymizedPair, provenance: Provenance) -> Self {
        Example {
            utterance: pair.utterance.tokens.clone(),
            sql: pair.sql.clone(),
            provenance,
        }
    }

    pub fn utterance_text(&self) -> String {
        self.utterance.join(" ")
    }

    pub fn target_tokens(&self) -> Vec<String> {
        text::sql_target_tokens(&self.sql)
    }

    pub fn key(&self) -> (String, String) {
        (self.utterance_text(), self.sql.clone())
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub utterance: String,
    pub sql: String,
    pub provenance: Provenance,
}

impl Record {
    /// Anonymizes the pair against `schema`; already-anonymized records pass through unchanged.
    pub fn to_example(&self, schema: Option<&Schema>) -> Example {
        let words = text::words(&self.utterance);
        match schema {
            Some(s) => Example::from_pair(&anonymize_sql_pair(&words, &self.sql, s), self.provenance),
            None => Example::new(words, &self.sql, self.provenance),
        }
    }
}

impl From<&Example> for Record {
    fn from(e: &Example) -> Self {
        Record {
            utterance: e.utterance_text(),
            sql: e.sql.clone(),
            provenance: e.provenance,
        }
    }
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    fsutil::read_jsonl(path)
}

pub fn save_examples(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let records: Vec<Record> = examples.iter().map(Record::from).collect();
    fsutil::write_jsonl(path, &records)
}

pub fn load_examples(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<Vec<Example>> {
    Ok(load_records(path)?
        .iter()
        .map(|r| r.to_example(schema))
        .collect())
}
