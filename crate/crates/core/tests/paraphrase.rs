use std::collections::BTreeSet;

use nlidb::dataset::{Example, Provenance};
use nlidb::fixtures;
use nlidb::paraphrase::ParaphraseTable;
use nlidb::text;
use proptest::prelude::*;

fn ex(u: &str, sql: &str) -> Example {
    Example::new(text::words(u), sql, Provenance::Template)
}

fn table() -> ParaphraseTable {
    ParaphraseTable::parse("largest\tbiggest\t0.9\nlargest\tgreatest\t0.8\ncity\ttown\t0.7\nin\twithin\t0.5\npopulation\tnumber of people\t0.6\n").unwrap()
}

/// All single-word substitutions, enumerated by hand.
fn hand_enumeration() -> BTreeSet<String> {
    [
        "biggest city in STATE_NAME_1",
        "greatest city in STATE_NAME_1",
        "largest town in STATE_NAME_1",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

#[test]
fn exhaustive_augmentation_matches_hand_enumeration() {
    let data = vec![ex("largest city in STATE_NAME_1", "SELECT x FROM city WHERE state_name = STATE_NAME_1")];
    let out = table().augment(&data, 10, 0);
    assert_eq!(out[0], data[0]);
    let added: BTreeSet<String> = out[1..].iter().map(Example::utterance_text).collect();
    assert_eq!(added, hand_enumeration());
    assert_eq!(out.len(), 4);
    for e in &out[1..] {
        assert_eq!(e.sql, data[0].sql);
        assert_eq!(e.provenance, Provenance::Paraphrase);
    }
}

#[test]
fn k_limits_and_draws_are_distinct() {
    let data = vec![ex("largest city in STATE_NAME_1", "SELECT 1")];
    for seed in 0..20 {
        let out = table().augment(&data, 2, seed);
        assert_eq!(out.len(), 3);
        let added: BTreeSet<String> = out[1..].iter().map(Example::utterance_text).collect();
        assert_eq!(added.len(), 2);
        assert!(added.is_subset(&hand_enumeration()));
        assert_eq!(out, table().augment(&data, 2, seed));
    }
}

#[test]
fn one_many_substitution_changes_length() {
    let data = vec![ex("population of CITY_NAME_1", "SELECT 1")];
    let out = table().augment(&data, 5, 3);
    assert_eq!(out.len(), 2);
    assert_eq!(out[1].utterance_text(), "number of people of CITY_NAME_1");
}

#[test]
fn existing_utterances_are_not_duplicated() {
    let data = vec![
        ex("largest city in STATE_NAME_1", "SELECT 1"),
        ex("biggest city in STATE_NAME_1", "SELECT 1"),
    ];
    let out = table().augment(&data, 10, 0);
    let texts: Vec<String> = out.iter().map(Example::utterance_text).collect();
    let unique: BTreeSet<&String> = texts.iter().collect();
    assert_eq!(unique.len(), texts.len());
}

#[test]
fn bundled_table_loads() {
    let t = fixtures::paraphrases();
    assert!(!t.is_empty());
    assert!(t.alternatives("a").is_none());
}

proptest! {
    #[test]
    fn augmentation_bounds(k in 0usize..5, seed in any::<u64>(), picks in proptest::collection::vec(0usize..4, 1..6)) {
        let pool = [
            "largest city in STATE_NAME_1",
            "population of CITY_NAME_1",
            "rivers in STATE_NAME_1",
            "largest population city",
        ];
        let mut data: Vec<Example> = Vec::new();
        for p in picks {
            let e = ex(pool[p], "SELECT 1");
            if !data.contains(&e) {
                data.push(e);
            }
        }
        let out = table().augment(&data, k, seed);
        prop_assert_eq!(&out[..data.len()], &data[..]);
        prop_assert!(out.len() <= data.len() * (1 + k));
        for e in &out[data.len()..] {
            prop_assert!(e.utterance.iter().filter(|t| text::is_placeholder(t)).count() <= 1);
            prop_assert!(!data.iter().any(|d| d.utterance == e.utterance));
        }
    }
}
