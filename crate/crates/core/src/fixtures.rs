//! Bundled toy domains: a small academic-publications database and a
//! mini geography database with 200 labeled questions.

use std::sync::Arc;

use crate::anonymize::EntityIndex;
use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::executor::Database;
use crate::fsutil;
use crate::paraphrase::ParaphraseTable;
use crate::schema::Schema;

pub const ACADEMIC_SCHEMA: &str = include_str!("../data/academic_schema.json");
pub const ACADEMIC_SQL: &str = include_str!("../data/academic.sql");
pub const GEO_SCHEMA: &str = include_str!("../data/geo_schema.json");
pub const GEO_SQL: &str = include_str!("../data/geo.sql");
pub const GEO_QUESTIONS: &str = include_str!("../data/geo_questions.jsonl");
pub const PARAPHRASES: &str = include_str!("../data/paraphrases.tsv");
pub const EXAMPLE_UTTERANCES: &str = include_str!("../data/example_utterances.json");

/// A schema with its database and entity index, ready to use.
pub struct Domain {
    pub name: &'static str,
    pub schema: Arc<Schema>,
    pub db: Arc<Database>,
    pub index: Arc<EntityIndex>,
}

impl Domain {
    pub fn new(name: &'static str, schema: Schema, db: Database) -> Result<Domain> {
        let index = EntityIndex::build(&db, &schema)?;
        Ok(Domain {
            name,
            schema: Arc::new(schema),
            db: Arc::new(db),
            index: Arc::new(index),
        })
    }

    /// Curated example questions shown to users.
    pub fn example_utterances(&self) -> Vec<String> {
        example_utterances(self.name)
    }
}

pub fn academic() -> Result<Domain> {
    Domain::new("academic", Schema::from_json_str(ACADEMIC_SCHEMA)?, Database::from_sql(ACADEMIC_SQL)?)
}

pub fn geography() -> Result<Domain> {
    Domain::new("geography", Schema::from_json_str(GEO_SCHEMA)?, Database::from_sql(GEO_SQL)?)
}

/// The 200 labeled geography questions.
pub fn geo_questions() -> Result<Vec<Record>> {
    fsutil::parse_jsonl(GEO_QUESTIONS).map_err(|(line, e)| Error::Parse {
        path: "geo_questions.jsonl".into(),
        line,
        column: e.column(),
        message: e.to_string(),
    })
}

pub fn paraphrases() -> ParaphraseTable {
    ParaphraseTable::parse(PARAPHRASES).expect("bundled paraphrase table is valid")
}

pub fn example_utterances(domain: &str) -> Vec<String> {
    let all: std::collections::BTreeMap<String, Vec<String>> =
        serde_json::from_str(EXAMPLE_UTTERANCES).expect("bundled example utterances are valid");
    all.get(domain).cloned().unwrap_or_default()
}
