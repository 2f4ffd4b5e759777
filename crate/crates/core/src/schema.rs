//! Relational schema descriptions and join paths over the foreign-key graph.
//!
//! # Schema file format
//!
//! A schema file is a single JSON object:
//!
//! ```text
//! {
//!   "tables": [
//!     { "name": <identifier>,
//!       "english_name": <string>,
//!       "columns": [
//!         { "name": <identifier>,
//!           "value_type": "text" | "integer" | "float" | "date",
//!           "is_display_name": <bool, default false>,
//!           "entity": <bool, default = is_display_name> }
//!       ] }
//!   ],
//!   "foreign_keys": [ { "from": "<table>.<column>", "to": "<table>.<column>" } ]
//! }
//! ```
//!
//! `entity` controls whether the column's values are indexed for entity
//! recognition. Unknown keys are rejected.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Text,
    Integer,
    Float,
    Date,
}

impl ValueType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ValueType::Integer | ValueType::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnDef {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default)]
    pub is_display_name: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<bool>,
}

impl ColumnDef {
    /// Whether values of this column go into the entity index.
    pub fn is_entity(&self) -> bool {
        self.entity.unwrap_or(self.is_display_name)
    }

    /// Phrase used for the column on the utterance side of templates.
    pub fn english_name(&self) -> String {
        self.name.replace('_', " ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDef {
    pub name: String,
    pub english_name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn display_column(&self) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.is_display_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnRef {
            table: table.into(),
            column: column.into(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let (t, c) = s.split_once('.')?;
        if t.is_empty() || c.is_empty() || c.contains('.') {
            return None;
        }
        Some(ColumnRef::new(t, c))
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ForeignKey {
    pub from: ColumnRef,
    pub to: ColumnRef,
}

impl ForeignKey {
    /// Column of this key that lives in `table`, if any.
    fn column_in(&self, table: &str) -> Option<&str> {
        if self.from.table == table {
            Some(&self.from.column)
        } else if self.to.table == table {
            Some(&self.to.column)
        } else {
            None
        }
    }
}

impl fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {}", self.from, self.to)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawForeignKey {
    from: String,
    to: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    tables: Vec<TableDef>,
    #[serde(default)]
    foreign_keys: Vec<RawForeignKey>,
}

/// A validated schema together with its undirected foreign-key graph.
#[derive(Debug, Clone)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<ForeignKey>,
    /// table -> neighbor -> the foreign key used to join them.
    edges: BTreeMap<String, BTreeMap<String, ForeignKey>>,
}

/// Tables on a shortest path and the equality conditions linking consecutive ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinPath {
    pub tables: Vec<String>,
    pub join_conditions: Vec<ForeignKey>,
}

impl Schema {
    pub fn load(path: impl AsRef<Path>) -> Result<Schema> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::from_json_str(&text).map_err(|e| match e {
            Error::Json(j) => Error::parse(path, &j),
            other => other,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Schema> {
        let raw: RawSchema = serde_json::from_str(text)?;
        let mut fks = Vec::with_capacity(raw.foreign_keys.len());
        for fk in raw.foreign_keys {
            let from = ColumnRef::parse(&fk.from).ok_or_else(|| Error::DanglingForeignKey {
                from: fk.from.clone(),
                to: fk.to.clone(),
                reason: "endpoint must be written table.column".into(),
            })?;
            let to = ColumnRef::parse(&fk.to).ok_or_else(|| Error::DanglingForeignKey {
                from: fk.from.clone(),
                to: fk.to.clone(),
                reason: "endpoint must be written table.column".into(),
            })?;
            fks.push(ForeignKey { from, to });
        }
        Schema::new(raw.tables, fks)
    }

    pub fn new(tables: Vec<TableDef>, foreign_keys: Vec<ForeignKey>) -> Result<Schema> {
        let mut names = HashSet::new();
        for t in &tables {
            if t.name.is_empty() {
                return Err(Error::InvalidSchema("empty table name".into()));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::DuplicateTable(t.name.clone()));
            }
            if t.columns.is_empty() {
                return Err(Error::InvalidSchema(format!("table `{}` has no columns", t.name)));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if c.name.is_empty() {
                    return Err(Error::InvalidSchema(format!("empty column name in `{}`", t.name)));
                }
                if !cols.insert(c.name.as_str()) {
                    return Err(Error::InvalidSchema(format!(
                        "duplicate column `{}` in `{}`",
                        c.name, t.name
                    )));
                }
            }
            if t.columns.iter().filter(|c| c.is_display_name).count() > 1 {
                return Err(Error::InvalidSchema(format!(
                    "table `{}` has more than one display-name column",
                    t.name
                )));
            }
        }

        let lookup = |r: &ColumnRef| -> Option<&ColumnDef> {
            tables.iter().find(|t| t.name == r.table)?.column(&r.column)
        };
        for fk in &foreign_keys {
            let dangling = |reason: String| Error::DanglingForeignKey {
                from: fk.from.to_string(),
                to: fk.to.to_string(),
                reason,
            };
            let from = lookup(&fk.from).ok_or_else(|| dangling(format!("`{}` not found", fk.from)))?;
            let to = lookup(&fk.to).ok_or_else(|| dangling(format!("`{}` not found", fk.to)))?;
            if from.value_type != to.value_type {
                return Err(dangling(format!(
                    "value types differ ({:?} vs {:?})",
                    from.value_type, to.value_type
                )));
            }
        }

        let mut edges: BTreeMap<String, BTreeMap<String, ForeignKey>> = tables
            .iter()
            .map(|t| (t.name.clone(), BTreeMap::new()))
            .collect();
        for fk in &foreign_keys {
            let (a, b) = (&fk.from.table, &fk.to.table);
            if a == b {
                continue;
            }
            for (x, y) in [(a, b), (b, a)] {
                let slot = edges.get_mut(x).unwrap();
                match slot.get(y) {
                    Some(existing) if edge_key(existing, x, y) <= edge_key(fk, x, y) => {}
                    _ => {
                        slot.insert(y.clone(), fk.clone());
                    }
                }
            }
        }

        Ok(Schema {
            tables,
            foreign_keys,
            edges,
        })
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn column(&self, r: &ColumnRef) -> Option<&ColumnDef> {
        self.table(&r.table)?.column(&r.column)
    }

    /// Whether the column participates in any foreign key.
    pub fn is_key_column(&self, r: &ColumnRef) -> bool {
        self.foreign_keys.iter().any(|fk| &fk.from == r || &fk.to == r)
    }

    pub fn neighbors(&self, table: &str) -> impl Iterator<Item = &str> {
        self.edges
            .get(table)
            .into_iter()
            .flat_map(|m| m.keys().map(String::as_str))
    }

    /// The foreign key used when joining two adjacent tables.
    pub fn edge(&self, a: &str, b: &str) -> Option<&ForeignKey> {
        self.edges.get(a)?.get(b)
    }

    pub fn shortest_join_path(&self, from: &str, to: &str) -> Result<JoinPath> {
        for t in [from, to] {
            if self.table(t).is_none() {
                return Err(Error::UnknownTable(t.to_string()));
            }
        }
        // Distances to `to`, then a greedy walk picking the smallest-named
        // neighbor one step closer: that yields the lexicographically smallest
        // shortest path.
        let mut dist: HashMap<&str, usize> = HashMap::new();
        let mut queue = VecDeque::from([to]);
        dist.insert(to, 0);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur];
            for n in self.neighbors(cur) {
                if !dist.contains_key(n) {
                    dist.insert(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        let Some(&total) = dist.get(from) else {
            return Err(Error::NoPath {
                from: from.to_string(),
                to: to.to_string(),
            });
        };
        let mut tables = vec![from.to_string()];
        let mut conds = Vec::with_capacity(total);
        let mut cur = from;
        while cur != to {
            let want = dist[cur] - 1;
            let next = self
                .neighbors(cur)
                .find(|n| dist.get(n) == Some(&want))
                .expect("bfs distances are consistent");
            conds.push(self.edge(cur, next).unwrap().clone());
            tables.push(next.to_string());
            cur = next;
        }
        Ok(JoinPath {
            tables,
            join_conditions: conds,
        })
    }
}

/// Ordering among parallel foreign keys between `x` and `y`: by the column
/// names on the lexicographically smaller table, then the other side.
fn edge_key<'a>(fk: &'a ForeignKey, x: &str, y: &str) -> (&'a str, &'a str) {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    (fk.column_in(lo).unwrap_or(""), fk.column_in(hi).unwrap_or(""))
}

impl JoinPath {
    /// `FROM` and `WHERE` fragments: every path table once, and the conjoined join conditions.
    pub fn join_clauses(&self) -> (String, String) {
        let from = self.tables.join(" , ");
        let conds: Vec<String> = self.join_conditions.iter().map(ToString::to_string).collect();
        (from, conds.join(" AND "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str) -> ColumnDef {
        ColumnDef {
            name: name.into(),
            value_type: ValueType::Integer,
            is_display_name: false,
            entity: None,
        }
    }

    fn table(name: &str, cols: &[&str]) -> TableDef {
        TableDef {
            name: name.into(),
            english_name: name.into(),
            columns: cols.iter().map(|c| col(c)).collect(),
        }
    }

    fn fk(from: &str, to: &str) -> ForeignKey {
        ForeignKey {
            from: ColumnRef::parse(from).unwrap(),
            to: ColumnRef::parse(to).unwrap(),
        }
    }

    #[test]
    fn self_path_has_no_conditions() {
        let s = Schema::new(vec![table("paper", &["id"])], vec![]).unwrap();
        let p = s.shortest_join_path("paper", "paper").unwrap();
        assert_eq!(p.tables, vec!["paper"]);
        assert!(p.join_conditions.is_empty());
        assert_eq!(p.join_clauses(), ("paper".to_string(), String::new()));
    }

    #[test]
    fn disconnected_tables_have_no_path() {
        let s = Schema::new(vec![table("a", &["id"]), table("b", &["id"])], vec![]).unwrap();
        assert!(matches!(s.shortest_join_path("a", "b"), Err(Error::NoPath { .. })));
        assert!(matches!(s.shortest_join_path("a", "zz"), Err(Error::UnknownTable(_))));
    }

    #[test]
    fn dangling_and_duplicate_are_rejected() {
        let err = Schema::new(vec![table("a", &["id"])], vec![fk("a.id", "missing.id")]).unwrap_err();
        assert!(matches!(err, Error::DanglingForeignKey { .. }));
        let err = Schema::new(vec![table("a", &["id"]), table("a", &["x"])], vec![]).unwrap_err();
        assert!(matches!(err, Error::DuplicateTable(_)));
    }

    #[test]
    fn fk_type_mismatch_is_rejected() {
        let mut b = table("b", &["name"]);
        b.columns[0].value_type = ValueType::Text;
        let err = Schema::new(vec![table("a", &["id"]), b], vec![fk("a.id", "b.name")]).unwrap_err();
        assert!(matches!(err, Error::DanglingForeignKey { .. }));
    }

    #[test]
    fn parallel_keys_pick_first_by_column_name() {
        let s = Schema::new(
            vec![table("paper", &["id"]), table("cite", &["src", "dst"])],
            vec![fk("cite.src", "paper.id"), fk("cite.dst", "paper.id")],
        )
        .unwrap();
        assert_eq!(s.edge("paper", "cite").unwrap().from.column, "dst");
        assert_eq!(s.edge("cite", "paper").unwrap().from.column, "dst");
    }

    #[test]
    fn ties_break_lexicographically() {
        // a - b - d and a - c - d are both length 2.
        let s = Schema::new(
            vec![
                table("a", &["id"]),
                table("c", &["a_id", "d_id"]),
                table("b", &["a_id", "d_id"]),
                table("d", &["id"]),
            ],
            vec![
                fk("c.a_id", "a.id"),
                fk("c.d_id", "d.id"),
                fk("b.a_id", "a.id"),
                fk("b.d_id", "d.id"),
            ],
        )
        .unwrap();
        assert_eq!(s.shortest_join_path("a", "d").unwrap().tables, vec!["a", "b", "d"]);
        assert_eq!(s.shortest_join_path("d", "a").unwrap().tables, vec!["d", "b", "a"]);
    }

    #[test]
    fn bad_json_reports_position() {
        let err = Schema::from_json_str("{\"tables\": [ }").unwrap_err();
        assert!(matches!(err, Error::Json(_)));
        let err = Schema::from_json_str("{\"tables\": [], \"bogus\": 1}").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }
}
