use std::collections::BTreeMap;
use std::time::Instant;

use nlidb::fixtures;
use nlidb::template::{bundled_templates, enumerate_assignments, generate_seed_dataset, instantiate, Assignment};
use nlidb::text;

#[test]
fn academic_seed_data_executes() {
    let d = fixtures::academic().unwrap();
    let t0 = Instant::now();
    let examples = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 30, 0).unwrap();
    assert!(examples.len() >= 100, "only {} examples", examples.len());
    for ex in &examples {
        let sql = ex.concrete_sql().unwrap();
        d.db.execute_default(&sql).unwrap_or_else(|e| panic!("{sql}: {e}"));
    }
    assert!(t0.elapsed().as_secs() < 60);
}

#[test]
fn geography_seed_data_executes() {
    let d = fixtures::geography().unwrap();
    let examples = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 10, 0).unwrap();
    assert!(!examples.is_empty());
    for ex in &examples {
        d.db.execute_default(&ex.concrete_sql().unwrap()).unwrap();
    }
}

#[test]
fn placeholders_agree_between_sides() {
    let d = fixtures::academic().unwrap();
    for ex in generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 10, 4).unwrap() {
        let mut in_sql: Vec<String> = text::sql_target_tokens(&ex.sql)
            .into_iter()
            .filter(|t| text::is_placeholder(t))
            .collect();
        let mut in_utt: Vec<String> = ex
            .utterance
            .tokens
            .iter()
            .filter(|t| text::is_placeholder(t))
            .cloned()
            .collect();
        in_sql.sort();
        in_sql.dedup();
        in_utt.sort();
        in_utt.dedup();
        assert_eq!(in_sql, in_utt, "{}", ex.template_id);
        for b in &ex.utterance.map.bindings {
            assert!(!b.surface.is_empty());
        }
    }
}

#[test]
fn same_seed_same_dataset() {
    let d = fixtures::academic().unwrap();
    let a = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 5, 11).unwrap();
    let b = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 5, 11).unwrap();
    assert_eq!(a, b);
    let c = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 5, 12).unwrap();
    assert_ne!(a, c);
}

#[test]
fn cap_bounds_each_template() {
    let d = fixtures::academic().unwrap();
    let examples = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 3, 0).unwrap();
    let mut per: BTreeMap<&str, usize> = BTreeMap::new();
    for ex in &examples {
        *per.entry(ex.template_id.as_str()).or_default() += 1;
    }
    assert!(per.values().all(|&n| n <= 3), "{per:?}");
    assert!(generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 0, 0).unwrap().is_empty());
}

#[test]
fn list_all_has_one_assignment_per_display_table() {
    let d = fixtures::academic().unwrap();
    let t = bundled_templates().into_iter().find(|t| t.id == "list_all").unwrap();
    let expected = d.schema.tables.iter().filter(|t| t.display_column().is_some()).count();
    assert_eq!(enumerate_assignments(&t, &d.schema).unwrap().len(), expected);
}

#[test]
fn author_dataset_question_uses_the_join_path() {
    let d = fixtures::academic().unwrap();
    let t = bundled_templates().into_iter().find(|t| t.id == "list_for_named").unwrap();
    let assignment: Assignment = [
        ("ENT1", "dataset"),
        ("ENT1.COL1", "dataset.dataset_name"),
        ("ENT2", "author"),
        ("ENT2.COL1", "author.author_name"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    assert!(enumerate_assignments(&t, &d.schema).unwrap().contains(&assignment));
    let mut ex = instantiate(&t, &d.schema, &assignment).unwrap();
    assert_eq!(ex.utterance.text(), "list dataset for author AUTHOR_NAME_1");

    let path = d.schema.shortest_join_path("dataset", "author").unwrap();
    for fk in &path.join_conditions {
        assert!(ex.sql.contains(&fk.to_string()), "{} lacks {fk}", ex.sql);
    }
    for table in &path.tables {
        assert!(ex.sql.contains(table.as_str()));
    }

    ex.utterance.map.bindings[0].surface = "Percy Liang".into();
    let r = d.db.execute_default(&ex.concrete_sql().unwrap()).unwrap();
    let mut names: Vec<String> = r.rows.iter().map(|row| row[0].render()).collect();
    names.sort();
    // Percy Liang wrote papers 5 and 15, which use Geo880 and WebQuestions.
    assert_eq!(names, ["Geo880", "WebQuestions"]);
}
