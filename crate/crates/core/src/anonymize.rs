//! Entity anonymization: typed placeholders in, surfaces back out.
//!
//! At inference time mentions are found with a TF-IDF search over every
//! entity value in the database. At training time the SQL is available, so
//! literals are typed from the column they are compared against and aligned
//! with the utterance.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor::Database;
use crate::schema::{ColumnRef, Schema};
use crate::stopwords;
use crate::text::{self, SqlToken};
use crate::tfidf::TfIdf;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub surface: String,
    pub type_base: String,
    pub source: ColumnRef,
}

#[derive(Debug, Clone)]
pub struct AnonymizerConfig {
    pub threshold: f64,
    pub max_span: usize,
    pub stopwords: HashSet<String>,
}

impl Default for AnonymizerConfig {
    fn default() -> Self {
        AnonymizerConfig {
            threshold: 0.6,
            max_span: 6,
            stopwords: stopwords::default_set().clone(),
        }
    }
}

/// Search engine over all entity values of a database.
#[derive(Debug, Clone)]
pub struct EntityIndex {
    records: Vec<EntityRecord>,
    tfidf: TfIdf,
    postings: HashMap<String, Vec<usize>>,
    config: AnonymizerConfig,
    schema_words: HashSet<String>,
}

impl EntityIndex {
    /// Indexes every distinct value of every entity column.
    pub fn build(db: &Database, schema: &Schema) -> Result<EntityIndex> {
        let mut records = Vec::new();
        for table in &schema.tables {
            for col in table.columns.iter().filter(|c| c.is_entity()) {
                for surface in db.distinct_values(&table.name, &col.name)? {
                    if surface.trim().is_empty() {
                        continue;
                    }
                    records.push(EntityRecord {
                        surface,
                        type_base: text::type_base(&col.name),
                        source: ColumnRef::new(&table.name, &col.name),
                    });
                }
            }
        }
        Ok(EntityIndex::from_records(records).with_schema_words(schema))
    }

    /// Marks the words of table and column names; a span made only of such
    /// words ("city", "state name") refers to the schema, not to an entity,
    /// unless it spells an entity exactly.
    pub fn with_schema_words(mut self, schema: &Schema) -> EntityIndex {
        for t in &schema.tables {
            self.schema_words.extend(text::words(&t.name.replace('_', " ")));
            self.schema_words.extend(text::words(&t.english_name));
            for c in &t.columns {
                self.schema_words.extend(text::words(&c.english_name()));
            }
        }
        self
    }

    /// Reads an entity dump: one `surface<TAB>table.column` record per line.
    pub fn load_dump(path: impl AsRef<Path>) -> Result<EntityIndex> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| Error::Parse {
                path: path.into(),
                line: i + 1,
                column: 1,
                message: m.into(),
            };
            let (surface, source) = line.rsplit_once('\t').ok_or_else(|| bad("expected surface<TAB>table.column"))?;
            let source = ColumnRef::parse(source.trim()).ok_or_else(|| bad("bad table.column"))?;
            if surface.is_empty() {
                return Err(bad("empty surface"));
            }
            records.push(EntityRecord {
                surface: surface.to_string(),
                type_base: text::type_base(&source.column),
                source,
            });
        }
        Ok(EntityIndex::from_records(records))
    }

    pub fn from_records(records: Vec<EntityRecord>) -> EntityIndex {
        EntityIndex::with_config(records, AnonymizerConfig::default())
    }

    pub fn with_config(mut records: Vec<EntityRecord>, config: AnonymizerConfig) -> EntityIndex {
        let mut seen = HashSet::new();
        records.retain(|r| seen.insert((r.surface.clone(), r.source.clone())));
        let docs: Vec<Vec<String>> = records.iter().map(|r| text::words(&r.surface)).collect();
        let mut postings: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, d) in docs.iter().enumerate() {
            for t in d.iter().collect::<BTreeSet<_>>() {
                postings.entry(t.clone()).or_default().push(i);
            }
        }
        EntityIndex {
            tfidf: TfIdf::fit(docs),
            records,
            postings,
            config,
            schema_words: HashSet::new(),
        }
    }

    pub fn records(&self) -> &[EntityRecord] {
        &self.records
    }

    pub fn tfidf(&self) -> &TfIdf {
        &self.tfidf
    }

    pub fn config(&self) -> &AnonymizerConfig {
        &self.config
    }

    /// Best-scoring record for a span. Ties go to the lexicographically first surface.
    pub fn best_match(&self, span: &[String]) -> Option<(usize, f64)> {
        let q = self.tfidf.vectorize(span);
        let mut cands: Vec<usize> = span
            .iter()
            .filter_map(|t| self.postings.get(t))
            .flatten()
            .copied()
            .collect();
        cands.sort_unstable();
        cands.dedup();
        let mut best: Option<(usize, f64)> = None;
        for i in cands {
            let s = crate::tfidf::cosine(&q, self.tfidf.vector(i));
            best = match best {
                None => Some((i, s)),
                Some((j, t)) => {
                    let better = s > t
                        || (s == t
                            && (&self.records[i].surface, &self.records[i].source)
                                < (&self.records[j].surface, &self.records[j].source));
                    if better {
                        Some((i, s))
                    } else {
                        Some((j, t))
                    }
                }
            };
        }
        best
    }

    /// A span may name an entity only if every word occurs in some entity
    /// and it neither starts nor ends with a stopword.
    fn is_candidate(&self, span: &[String]) -> bool {
        let (Some(first), Some(last)) = (span.first(), span.last()) else {
            return false;
        };
        !self.config.stopwords.contains(first)
            && !self.config.stopwords.contains(last)
            && span
                .iter()
                .all(|w| !text::is_placeholder(w) && self.tfidf.contains_term(w))
    }

    pub fn anonymize_text(&self, utterance: &str) -> AnonymizedUtterance {
        self.anonymize_utterance(&text::words(utterance))
    }

    pub fn anonymize_utterance(&self, words: &[String]) -> AnonymizedUtterance {
        let n = words.len();
        let mut covered = vec![false; n];
        let mut found: Vec<(usize, usize, usize)> = Vec::new();
        for len in (1..=self.config.max_span.min(n)).rev() {
            for start in 0..=(n - len) {
                let end = start + len;
                if covered[start..end].iter().any(|&c| c) {
                    continue;
                }
                let span = &words[start..end];
                if !self.is_candidate(span) {
                    continue;
                }
                if let Some((rec, score)) = self.best_match(span) {
                    let schema_only = span.iter().all(|w| self.schema_words.contains(w));
                    if score >= self.config.threshold && (!schema_only || score >= 1.0 - 1e-9) {
                        covered[start..end].iter_mut().for_each(|c| *c = true);
                        found.push((start, end, rec));
                    }
                }
            }
        }
        found.sort_unstable();

        let mut map = AnonymizationMap::default();
        let mut mentions = Vec::with_capacity(found.len());
        for &(start, end, rec) in &found {
            let r = &self.records[rec];
            let placeholder = map.bind(&r.surface, &r.type_base, &r.source);
            mentions.push(Mention {
                start,
                end,
                placeholder,
                text: words[start..end].join(" "),
            });
        }
        AnonymizedUtterance::from_mentions(words, mentions, map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub placeholder: String,
    pub surface: String,
    pub source: ColumnRef,
}

/// Placeholder bindings, numbered per type base from 1 in the order they were bound.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationMap {
    pub bindings: Vec<Binding>,
}

impl AnonymizationMap {
    pub fn get(&self, placeholder: &str) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.placeholder == placeholder)
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    /// Returns the placeholder for `surface`, binding the next free number for `type_base` if new.
    pub fn bind(&mut self, surface: &str, type_base: &str, source: &ColumnRef) -> String {
        if let Some(b) = self.bindings.iter().find(|b| {
            b.surface == surface && text::split_placeholder(&b.placeholder).map(|p| p.0) == Some(type_base)
        }) {
            return b.placeholder.clone();
        }
        let next = self
            .bindings
            .iter()
            .filter(|b| text::split_placeholder(&b.placeholder).map(|p| p.0) == Some(type_base))
            .count()
            + 1;
        let placeholder = format!("{type_base}_{next}");
        self.bindings.push(Binding {
            placeholder: placeholder.clone(),
            surface: surface.to_string(),
            source: source.clone(),
        });
        placeholder
    }
}

/// A recognized entity span `[start, end)` over the original word tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub placeholder: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizedUtterance {
    pub tokens: Vec<String>,
    pub map: AnonymizationMap,
    pub mentions: Vec<Mention>,
}

impl AnonymizedUtterance {
    /// Utterance without any entities recognized.
    pub fn plain(words: &[String]) -> Self {
        AnonymizedUtterance {
            tokens: words.to_vec(),
            map: AnonymizationMap::default(),
            mentions: Vec::new(),
        }
    }

    fn from_mentions(words: &[String], mentions: Vec<Mention>, map: AnonymizationMap) -> Self {
        let mut tokens = Vec::with_capacity(words.len());
        let mut i = 0;
        let mut it = mentions.iter().peekable();
        while i < words.len() {
            match it.peek() {
                Some(m) if m.start == i => {
                    tokens.push(m.placeholder.clone());
                    i = m.end;
                    it.next();
                }
                _ => {
                    tokens.push(words[i].clone());
                    i += 1;
                }
            }
        }
        AnonymizedUtterance {
            tokens,
            map,
            mentions,
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Tokens with every bound placeholder replaced by its surface.
    pub fn restore(&self) -> String {
        substitute_surfaces(&self.tokens, &self.map)
    }
}

/// Replaces bound placeholders in a token sequence with their surfaces; unbound ones stay.
pub fn substitute_surfaces(tokens: &[String], map: &AnonymizationMap) -> String {
    tokens
        .iter()
        .map(|t| match map.get(t) {
            Some(b) => b.surface.clone(),
            None => t.clone(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Training-time anonymization of an (utterance, SQL) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymizedPair {
    pub utterance: AnonymizedUtterance,
    /// Canonical SQL text with literals replaced by placeholders.
    pub sql: String,
    /// Literals found in the SQL but not in the utterance.
    pub unaligned: Vec<String>,
}

impl AnonymizedPair {
    pub fn is_aligned(&self) -> bool {
        self.unaligned.is_empty()
    }
}

struct Literal {
    token_idx: usize,
    surface: String,
    type_base: String,
    source: ColumnRef,
}

fn resolve_column(ident: &str, schema: &Schema) -> ColumnRef {
    let (qual, col) = match ident.split_once('.') {
        Some((q, c)) => (Some(q), c),
        None => (None, ident),
    };
    if let Some(q) = qual {
        if schema.table(q).and_then(|t| t.column(col)).is_some() {
            return ColumnRef::new(q, col);
        }
    }
    schema
        .tables
        .iter()
        .find(|t| t.column(col).is_some())
        .map(|t| ColumnRef::new(&t.name, col))
        .unwrap_or_else(|| ColumnRef::new(qual.unwrap_or(""), col))
}

fn literal_text(tok: &SqlToken) -> Option<&str> {
    match tok {
        SqlToken::Str(s) | SqlToken::Number(s) => Some(s),
        _ => None,
    }
}

/// Finds `column = literal`, `literal = column` and `column IN (literal, ...)` comparisons.
fn find_literals(tokens: &[SqlToken], schema: &Schema) -> Vec<Literal> {
    let mut out = Vec::new();
    let eq = |t: &SqlToken| matches!(t, SqlToken::Symbol(s) if s == "=");
    let push = |out: &mut Vec<Literal>, idx: usize, col: &str, lit: &str| {
        let source = resolve_column(col, schema);
        out.push(Literal {
            token_idx: idx,
            surface: lit.to_string(),
            type_base: text::type_base(&source.column),
            source,
        });
    };
    for i in 0..tokens.len() {
        if let SqlToken::Ident(col) = &tokens[i] {
            if i + 2 < tokens.len() && eq(&tokens[i + 1]) {
                if let Some(lit) = literal_text(&tokens[i + 2]) {
                    push(&mut out, i + 2, col, lit);
                }
            }
            if i >= 2 && eq(&tokens[i - 1]) {
                if let Some(lit) = literal_text(&tokens[i - 2]) {
                    push(&mut out, i - 2, col, lit);
                }
            }
            if i + 2 < tokens.len()
                && matches!(&tokens[i + 1], SqlToken::Keyword(k) if k == "IN")
                && matches!(&tokens[i + 2], SqlToken::Symbol(s) if s == "(")
            {
                let mut j = i + 3;
                while j < tokens.len() {
                    match &tokens[j] {
                        SqlToken::Symbol(s) if s == "," => {}
                        t => match literal_text(t) {
                            Some(lit) => push(&mut out, j, col, lit),
                            None => break,
                        },
                    }
                    j += 1;
                }
            }
        }
    }
    out.sort_by_key(|l| l.token_idx);
    out.dedup_by_key(|l| l.token_idx);
    out
}

fn find_span(words: &[String], needle: &[String], covered: &[bool]) -> Option<usize> {
    if needle.is_empty() || needle.len() > words.len() {
        return None;
    }
    (0..=words.len() - needle.len()).find(|&s| {
        words[s..s + needle.len()] == *needle && !covered[s..s + needle.len()].iter().any(|&c| c)
    })
}

/// Anonymizes a labeled pair. Literals are typed from their column and aligned
/// with the utterance; numbering follows utterance reading order, with
/// unaligned literals numbered afterwards in SQL order.
pub fn anonymize_sql_pair(words: &[String], sql: &str, schema: &Schema) -> AnonymizedPair {
    let mut tokens = text::sql_tokens(sql);
    let literals = find_literals(&tokens, schema);

    // Distinct (surface, type_base) keys in SQL first-occurrence order.
    let mut keys: Vec<(String, String, ColumnRef)> = Vec::new();
    for l in &literals {
        if !keys.iter().any(|k| k.0 == l.surface && k.1 == l.type_base) {
            keys.push((l.surface.clone(), l.type_base.clone(), l.source.clone()));
        }
    }

    let mut covered = vec![false; words.len()];
    let mut spans: Vec<Option<(usize, usize)>> = Vec::with_capacity(keys.len());
    for (surface, _, _) in &keys {
        let needle = text::words(surface);
        let span = find_span(words, &needle, &covered).map(|s| (s, s + needle.len()));
        if let Some((s, e)) = span {
            covered[s..e].iter_mut().for_each(|c| *c = true);
        }
        spans.push(span);
    }

    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&k| (spans[k].map_or(usize::MAX, |s| s.0), k));

    let mut map = AnonymizationMap::default();
    let mut placeholders: BTreeMap<usize, String> = BTreeMap::new();
    for &k in &order {
        let (surface, tb, source) = &keys[k];
        placeholders.insert(k, map.bind(surface, tb, source));
    }

    for l in &literals {
        let k = keys
            .iter()
            .position(|key| key.0 == l.surface && key.1 == l.type_base)
            .unwrap();
        tokens[l.token_idx] = SqlToken::Placeholder(placeholders[&k].clone());
    }

    let mut mentions: Vec<Mention> = spans
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            s.map(|(start, end)| Mention {
                start,
                end,
                placeholder: placeholders[&k].clone(),
                text: words[start..end].join(" "),
            })
        })
        .collect();
    mentions.sort_by_key(|m| m.start);

    let unaligned: Vec<String> = (0..keys.len())
        .filter(|&k| spans[k].is_none())
        .map(|k| keys[k].0.clone())
        .collect();
    if !unaligned.is_empty() {
        log::warn!(
            "literals {:?} not found in utterance {:?}; kept on the SQL side only",
            unaligned,
            words.join(" ")
        );
    }

    AnonymizedPair {
        utterance: AnonymizedUtterance::from_mentions(words, mentions, map),
        sql: text::join_sql(&tokens),
        unaligned,
    }
}

fn looks_numeric(s: &str) -> bool {
    let s = s.strip_prefix('-').unwrap_or(s);
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_digit() || c == '.')
        && s.chars().filter(|&c| c == '.').count() <= 1
        && !s.starts_with('.')
        && !s.ends_with('.')
}

/// Renders a surface as a SQL literal.
pub fn sql_literal(surface: &str) -> String {
    if looks_numeric(surface) {
        surface.to_string()
    } else {
        format!("'{}'", surface.replace('\'', "''"))
    }
}

/// Fills bound placeholders in decoded SQL tokens with quoted surfaces.
pub fn deanonymize<S: AsRef<str>>(sql_tokens: &[S], map: &AnonymizationMap) -> Result<String> {
    let mut unbound = Vec::new();
    let mut out = Vec::with_capacity(sql_tokens.len());
    for t in sql_tokens {
        let t = t.as_ref();
        if text::is_placeholder(t) {
            match map.get(t) {
                Some(b) => out.push(sql_literal(&b.surface)),
                None => {
                    if !unbound.iter().any(|u| u == t) {
                        unbound.push(t.to_string());
                    }
                }
            }
        } else {
            out.push(t.to_string());
        }
    }
    if unbound.is_empty() {
        Ok(out.join(" "))
    } else {
        Err(Error::UnboundPlaceholders(unbound))
    }
}
