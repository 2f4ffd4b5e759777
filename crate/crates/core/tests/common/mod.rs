#![allow(dead_code)]

use nlidb::anonymize::{deanonymize, sql_literal, EntityIndex};
use nlidb::fixtures::{self, Domain};
use nlidb::text;

pub struct AnonCase {
    pub domain: String,
    pub utterance: String,
    pub expected: String,
    pub bindings: Vec<(String, String)>,
}

pub fn anonymization_cases() -> Vec<AnonCase> {
    include_str!("../data/anonymization.tsv")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let bindings = f
                .get(3)
                .unwrap_or(&"")
                .split(';')
                .filter(|b| !b.is_empty())
                .map(|b| {
                    let (p, s) = b.split_once('=').unwrap();
                    (p.to_string(), s.to_string())
                })
                .collect();
            AnonCase {
                domain: f[0].to_string(),
                utterance: f[1].to_string(),
                expected: f[2].to_string(),
                bindings,
            }
        })
        .collect()
}

pub fn domains() -> (Domain, Domain) {
    (fixtures::academic().unwrap(), fixtures::geography().unwrap())
}

/// Checks one case; returns a description of the first problem found.
pub fn check_round_trip(case: &AnonCase, domain: &Domain) -> Result<(), String> {
    let index: &EntityIndex = &domain.index;
    let a = index.anonymize_text(&case.utterance);
    if a.text() != case.expected {
        return Err(format!("{:?}: anonymized to {:?}", case.utterance, a.text()));
    }
    let got: Vec<(String, String)> = a
        .map
        .bindings
        .iter()
        .map(|b| (b.placeholder.clone(), b.surface.clone()))
        .collect();
    let mut want = case.bindings.clone();
    let mut got_sorted = got.clone();
    want.sort();
    got_sorted.sort();
    if got_sorted != want {
        return Err(format!("{:?}: bindings {:?}", case.utterance, got));
    }

    // A query mentioning every placeholder must come back with literals only.
    let mut sql = vec!["SELECT".to_string(), "COUNT".into(), "(".into(), "*".into(), ")".into()];
    let mut clauses = Vec::new();
    for b in &a.map.bindings {
        clauses.push(vec![format!("{}.{}", b.source.table, b.source.column), "=".into(), b.placeholder.clone()]);
    }
    let tables: Vec<String> = {
        let mut t: Vec<String> = a.map.bindings.iter().map(|b| b.source.table.clone()).collect();
        t.sort();
        t.dedup();
        t
    };
    if !tables.is_empty() {
        sql.push("FROM".into());
        sql.push(tables.join(" , "));
        sql.push("WHERE".into());
        sql.push(clauses.iter().map(|c| c.join(" ")).collect::<Vec<_>>().join(" AND "));
    }
    let sql_tokens: Vec<String> = sql.join(" ").split(' ').map(String::from).collect();
    let filled = deanonymize(&sql_tokens, &a.map).map_err(|e| format!("{:?}: {e}", case.utterance))?;
    for b in &a.map.bindings {
        if !filled.contains(&sql_literal(&b.surface)) {
            return Err(format!("{:?}: {} missing from {filled}", case.utterance, b.surface));
        }
    }
    // Literals may hold spaces, so scan outside quotes for leftover placeholders.
    let unquoted: String = filled.split('\'').step_by(2).collect::<Vec<_>>().join(" ");
    if let Some(leak) = unquoted.split_whitespace().find(|t| text::is_placeholder(t)) {
        return Err(format!("{:?}: placeholder {leak} leaked into {filled}", case.utterance));
    }
    let restored = a.restore();
    if text::is_placeholder(restored.split_whitespace().find(|t| text::is_placeholder(t)).unwrap_or("")) {
        return Err(format!("{:?}: restore left a placeholder: {restored}", case.utterance));
    }
    // Surfaces come from the database, so each one must select at least one row.
    for b in &a.map.bindings {
        let q = format!(
            "SELECT COUNT ( * ) FROM {} WHERE {} = {}",
            b.source.table,
            b.source.column,
            sql_literal(&b.surface)
        );
        let r = domain.db.execute_default(&q).map_err(|e| format!("{q}: {e}"))?;
        if r.rows[0][0].render() == "0" {
            return Err(format!("{:?}: {} not in the database", case.utterance, b.surface));
        }
    }
    Ok(())
}
