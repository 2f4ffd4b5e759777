//! Schema-agnostic language/SQL templates and seed-data generation.
//!
//! # Template file format
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "...", "utterance_pattern": "...", "sql_pattern": "...",
//!  "slots": {"ENT1": "table", "ENT1.COL1": "entity", "ENT1.COL1.TYPE": "placeholder", ...}}
//! ```
//!
//! Slots are written literally as `<ENT1>`, `<ENT1.COL1>`, `<ENT1.COL1.TYPE>`,
//! `<JOIN_FROM>` and `<JOIN_WHERE>`. Declared kinds:
//!
//! | slot              | kind                                              |
//! |-------------------|---------------------------------------------------|
//! | `ENTk`            | `table`                                           |
//! | `ENTk.COLm`       | `display`, `entity`, `attribute` or `numeric`     |
//! | `ENTk.COLm.TYPE`  | `placeholder` (its column must be `entity`)       |
//! | `JOIN_FROM/WHERE` | `join`                                            |
//!
//! On the utterance side `<ENTk>` becomes the table's English name and
//! `<ENTk.COLm>` the column name with spaces; on the SQL side they become the
//! table name and the qualified column. `<ENTk.COLm.TYPE>` becomes a typed
//! placeholder on both sides.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::anonymize::{deanonymize, AnonymizationMap, AnonymizedUtterance};
use crate::dataset::{Example, Provenance};
use crate::error::{Error, Result};
use crate::executor::Database;
use crate::schema::{ColumnDef, ColumnRef, Schema};
use crate::text;

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<([A-Z0-9_.]+)>").unwrap());

pub const BUNDLED_CATALOG: &str = include_str!("../data/templates.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Table,
    Display,
    Entity,
    Attribute,
    Numeric,
    Placeholder,
    Join,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Ent(u8),
    Col(u8, u8),
    Type(u8, u8),
    JoinFrom,
    JoinWhere,
}

impl Slot {
    pub fn parse(s: &str) -> Option<Slot> {
        match s {
            "JOIN_FROM" => return Some(Slot::JoinFrom),
            "JOIN_WHERE" => return Some(Slot::JoinWhere),
            _ => {}
        }
        let parts: Vec<&str> = s.split('.').collect();
        let ent = parts.first()?.strip_prefix("ENT")?.parse().ok()?;
        match parts.as_slice() {
            [_] => Some(Slot::Ent(ent)),
            [_, c] => Some(Slot::Col(ent, c.strip_prefix("COL")?.parse().ok()?)),
            [_, c, "TYPE"] => Some(Slot::Type(ent, c.strip_prefix("COL")?.parse().ok()?)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaTemplate {
    pub id: String,
    pub utterance_pattern: String,
    pub sql_pattern: String,
    pub slots: BTreeMap<String, SlotKind>,
}

impl SchemaTemplate {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Template {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    fn parsed_slots(&self) -> Result<BTreeMap<Slot, SlotKind>> {
        let mut out = BTreeMap::new();
        for (name, kind) in &self.slots {
            let slot = Slot::parse(name).ok_or_else(|| self.err(format!("malformed slot name `{name}`")))?;
            let ok = match slot {
                Slot::Ent(_) => *kind == SlotKind::Table,
                Slot::Col(..) => matches!(
                    kind,
                    SlotKind::Display | SlotKind::Entity | SlotKind::Attribute | SlotKind::Numeric
                ),
                Slot::Type(..) => *kind == SlotKind::Placeholder,
                Slot::JoinFrom | Slot::JoinWhere => *kind == SlotKind::Join,
            };
            if !ok {
                return Err(self.err(format!("slot `{name}` cannot have kind {kind:?}")));
            }
            out.insert(slot, *kind);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(self.err("empty id"));
        }
        let slots = self.parsed_slots()?;
        for pattern in [&self.utterance_pattern, &self.sql_pattern] {
            if pattern.trim().is_empty() {
                return Err(self.err("empty pattern"));
            }
            if pattern.matches('<').count() != SLOT.find_iter(pattern).count() {
                return Err(self.err(format!("malformed slot syntax in `{pattern}`")));
            }
            for cap in SLOT.captures_iter(pattern) {
                if !self.slots.contains_key(&cap[1]) {
                    return Err(self.err(format!("undeclared slot `<{}>`", &cap[1])));
                }
            }
        }
        for j in ["JOIN_FROM", "JOIN_WHERE"] {
            let n = self.sql_pattern.matches(&format!("<{j}>")).count();
            if n > 1 {
                return Err(self.err(format!("`<{j}>` used {n} times")));
            }
        }
        let ents: Vec<u8> = slots
            .keys()
            .filter_map(|s| if let Slot::Ent(k) = s { Some(*k) } else { None })
            .collect();
        if ents.is_empty() || ents.len() > 2 {
            return Err(self.err("templates take one or two entity slots"));
        }
        for s in slots.keys() {
            match *s {
                Slot::Col(k, _) if !ents.contains(&k) => {
                    return Err(self.err(format!("column slot of undeclared ENT{k}")));
                }
                Slot::Type(k, m) if slots.get(&Slot::Col(k, m)) != Some(&SlotKind::Entity) => {
                    return Err(self.err(format!("ENT{k}.COL{m}.TYPE needs ENT{k}.COL{m} of kind entity")));
                }
                _ => {}
            }
        }
        let joins = slots.contains_key(&Slot::JoinFrom) as u8 + slots.contains_key(&Slot::JoinWhere) as u8;
        if ents.len() == 2 && joins != 2 {
            return Err(self.err("two-entity templates need <JOIN_FROM> and <JOIN_WHERE>"));
        }
        if ents.len() == 1 && joins != 0 {
            return Err(self.err("join slots need two entity slots"));
        }
        Ok(())
    }
}

pub fn parse_templates(content: &str) -> Result<Vec<SchemaTemplate>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: SchemaTemplate = serde_json::from_str(line).map_err(|e| Error::Template {
            id: format!("line {}", i + 1),
            message: e.to_string(),
        })?;
        t.validate()?;
        if !ids.insert(t.id.clone()) {
            return Err(t.err("duplicate id"));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<Vec<SchemaTemplate>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_templates(&text)
}

/// The 22-template catalog shipped with the crate.
pub fn bundled_templates() -> Vec<SchemaTemplate> {
    parse_templates(BUNDLED_CATALOG).expect("bundled catalog is valid")
}

/// Slot name -> schema element (`table` for ENT slots, `table.column` for COL slots).
pub type Assignment = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedExample {
    pub utterance: AnonymizedUtterance,
    /// Canonical anonymized SQL.
    pub sql: String,
    pub template_id: String,
    pub assignment: Assignment,
}

impl GeneratedExample {
    pub fn to_example(&self) -> Example {
        Example {
            utterance: self.utterance.tokens.clone(),
            sql: self.sql.clone(),
            provenance: Provenance::Template,
        }
    }

    /// SQL with placeholders filled from the utterance map.
    pub fn concrete_sql(&self) -> Result<String> {
        deanonymize(&text::sql_target_tokens(&self.sql), &self.utterance.map)
    }
}

fn column_fits(schema: &Schema, r: &ColumnRef, col: &ColumnDef, kind: SlotKind) -> bool {
    let key = schema.is_key_column(r);
    match kind {
        SlotKind::Display => col.is_display_name,
        SlotKind::Entity => col.is_entity(),
        SlotKind::Attribute => col.is_display_name || !key,
        SlotKind::Numeric => col.value_type.is_numeric() && !key,
        _ => false,
    }
}

/// Fills a template. Placeholders are bound with empty surfaces; see
/// [`generate_seed_dataset`] for concrete values.
pub fn instantiate(template: &SchemaTemplate, schema: &Schema, assignment: &Assignment) -> Result<GeneratedExample> {
    let bad = |m: String| Error::Assignment {
        id: template.id.clone(),
        message: m,
    };
    let slots = template.parsed_slots()?;
    let mut tables: BTreeMap<u8, &str> = BTreeMap::new();
    let mut columns: BTreeMap<(u8, u8), ColumnRef> = BTreeMap::new();
    for (slot, kind) in &slots {
        let name = slot_name(*slot);
        match *slot {
            Slot::Ent(k) => {
                let t = assignment.get(&name).ok_or_else(|| bad(format!("`{name}` unassigned")))?;
                schema.table(t).ok_or_else(|| bad(format!("unknown table `{t}`")))?;
                if tables.values().any(|x| x == t) {
                    return Err(bad(format!("table `{t}` assigned to two entity slots")));
                }
                tables.insert(k, t);
            }
            Slot::Col(k, _) => {
                let v = assignment.get(&name).ok_or_else(|| bad(format!("`{name}` unassigned")))?;
                let r = ColumnRef::parse(v).ok_or_else(|| bad(format!("`{v}` is not table.column")))?;
                let col = schema.column(&r).ok_or_else(|| bad(format!("unknown column `{v}`")))?;
                if assignment.get(&format!("ENT{k}")) != Some(&r.table) {
                    return Err(bad(format!("`{v}` is not a column of ENT{k}")));
                }
                if !column_fits(schema, &r, col, *kind) {
                    return Err(bad(format!("`{v}` does not fit kind {kind:?}")));
                }
                if columns.iter().any(|((k2, _), c)| *k2 == k && *c == r) {
                    return Err(bad(format!("`{v}` assigned twice")));
                }
                columns.insert(match slot { Slot::Col(a, b) => (*a, *b), _ => unreachable!() }, r);
            }
            _ => {}
        }
    }

    let join = if slots.contains_key(&Slot::JoinFrom) {
        let path = schema.shortest_join_path(tables[&1], tables[&2])?;
        Some(path.join_clauses())
    } else {
        None
    };

    // Placeholders are numbered in utterance reading order.
    let mut map = AnonymizationMap::default();
    let mut type_names: HashMap<(u8, u8), String> = HashMap::new();
    for cap in SLOT.captures_iter(&template.utterance_pattern) {
        if let Some(Slot::Type(k, m)) = Slot::parse(&cap[1]) {
            let r = &columns[&(k, m)];
            let ph = map.bind(&cap[1], &text::type_base(&r.column), r);
            type_names.entry((k, m)).or_insert(ph);
        }
    }
    for cap in SLOT.captures_iter(&template.sql_pattern) {
        if let Some(Slot::Type(k, m)) = Slot::parse(&cap[1]) {
            type_names.entry((k, m)).or_insert_with(|| {
                let r = &columns[&(k, m)];
                map.bind(&cap[1], &text::type_base(&r.column), r)
            });
        }
    }
    for b in &mut map.bindings {
        b.surface.clear();
    }

    let render = |pattern: &str, sql: bool| -> String {
        SLOT.replace_all(pattern, |cap: &regex::Captures| match Slot::parse(&cap[1]).unwrap() {
            Slot::Ent(k) => {
                let t = tables[&k];
                if sql {
                    t.to_string()
                } else {
                    schema.table(t).unwrap().english_name.clone()
                }
            }
            Slot::Col(k, m) => {
                let r = &columns[&(k, m)];
                if sql {
                    r.to_string()
                } else {
                    schema.column(r).unwrap().english_name()
                }
            }
            Slot::Type(k, m) => type_names[&(k, m)].clone(),
            Slot::JoinFrom => join.as_ref().unwrap().0.clone(),
            Slot::JoinWhere => join.as_ref().unwrap().1.clone(),
        })
        .into_owned()
    };

    Ok(GeneratedExample {
        utterance: AnonymizedUtterance {
            tokens: text::words(&render(&template.utterance_pattern, false)),
            map,
            mentions: Vec::new(),
        },
        sql: text::canonical_sql(&render(&template.sql_pattern, true)),
        template_id: template.id.clone(),
        assignment: assignment.clone(),
    })
}

fn slot_name(slot: Slot) -> String {
    match slot {
        Slot::Ent(k) => format!("ENT{k}"),
        Slot::Col(k, m) => format!("ENT{k}.COL{m}"),
        Slot::Type(k, m) => format!("ENT{k}.COL{m}.TYPE"),
        Slot::JoinFrom => "JOIN_FROM".into(),
        Slot::JoinWhere => "JOIN_WHERE".into(),
    }
}

/// Every valid assignment of `template` over `schema`, in schema order.
pub fn enumerate_assignments(template: &SchemaTemplate, schema: &Schema) -> Result<Vec<Assignment>> {
    let slots = template.parsed_slots()?;
    let ents: Vec<u8> = slots
        .keys()
        .filter_map(|s| if let Slot::Ent(k) = s { Some(*k) } else { None })
        .collect();
    let cols: Vec<(u8, u8, SlotKind)> = slots
        .iter()
        .filter_map(|(s, kind)| if let Slot::Col(k, m) = s { Some((*k, *m, *kind)) } else { None })
        .collect();

    let mut table_choices: Vec<Vec<&str>> = vec![vec![]];
    for _ in &ents {
        let mut next = Vec::new();
        for prefix in &table_choices {
            for t in &schema.tables {
                if !prefix.contains(&t.name.as_str()) {
                    let mut p = prefix.clone();
                    p.push(t.name.as_str());
                    next.push(p);
                }
            }
        }
        table_choices = next;
    }

    let mut out = Vec::new();
    for choice in table_choices {
        let table_of = |k: u8| choice[ents.iter().position(|&e| e == k).unwrap()];
        if ents.len() == 2 && schema.shortest_join_path(choice[0], choice[1]).is_err() {
            continue;
        }
        let mut partial: Vec<Assignment> = vec![ents
            .iter()
            .zip(&choice)
            .map(|(k, t)| (format!("ENT{k}"), t.to_string()))
            .collect()];
        for &(k, m, kind) in &cols {
            let t = schema.table(table_of(k)).unwrap();
            let mut next = Vec::new();
            for a in &partial {
                for c in &t.columns {
                    let r = ColumnRef::new(&t.name, &c.name);
                    let rs = r.to_string();
                    let taken = a
                        .iter()
                        .any(|(slot, v)| slot.starts_with(&format!("ENT{k}.")) && *v == rs);
                    if !taken && column_fits(schema, &r, c, kind) {
                        let mut a = a.clone();
                        a.insert(format!("ENT{k}.COL{m}"), rs);
                        next.push(a);
                    }
                }
            }
            partial = next;
        }
        out.extend(partial);
    }
    Ok(out)
}

/// Instantiates up to `cap_per_template` assignments per template and keeps
/// those whose SQL executes once placeholders are filled with real values.
pub fn generate_seed_dataset(
    templates: &[SchemaTemplate],
    schema: &Schema,
    db: &Database,
    cap_per_template: usize,
    seed: u64,
) -> Result<Vec<GeneratedExample>> {
    let mut values: HashMap<ColumnRef, Vec<String>> = HashMap::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    if cap_per_template == 0 {
        return Ok(out);
    }
    for (ti, template) in templates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ti as u64));
        let all = enumerate_assignments(template, schema)?;
        let chosen: Vec<&Assignment> = if all.len() > cap_per_template {
            let mut idx = index::sample(&mut rng, all.len(), cap_per_template).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| &all[i]).collect()
        } else {
            all.iter().collect()
        };
        for assignment in chosen {
            let mut ex = match instantiate(template, schema, assignment) {
                Ok(ex) => ex,
                Err(e) => {
                    log::debug!("skipping assignment: {e}");
                    continue;
                }
            };
            let mut ok = true;
            for b in &mut ex.utterance.map.bindings {
                if !values.contains_key(&b.source) {
                    let v = db.distinct_values(&b.source.table, &b.source.column)?;
                    values.insert(b.source.clone(), v);
                }
                match values[&b.source].choose(&mut rng) {
                    Some(v) => b.surface = v.clone(),
                    None => ok = false,
                }
            }
            if !ok {
                continue;
            }
            let sql = ex.concrete_sql()?;
            if let Err(e) = db.execute_default(&sql) {
                log::debug!("template {} produced non-executing SQL `{sql}`: {e}", template.id);
                continue;
            }
            if seen.insert((ex.utterance.text(), ex.sql.clone())) {
                out.push(ex);
            }
        }
    }
    Ok(out)
}
