mod common;

use nlidb::anonymize::{anonymize_sql_pair, deanonymize, EntityIndex, EntityRecord};
use nlidb::schema::ColumnRef;
use nlidb::text;
use nlidb::tfidf::TfIdf;
use nlidb::Error;
use proptest::prelude::*;

fn rec(surface: &str, table: &str, column: &str) -> EntityRecord {
    EntityRecord {
        surface: surface.into(),
        type_base: text::type_base(column),
        source: ColumnRef::new(table, column),
    }
}

#[test]
fn fixture_round_trips() {
    let (academic, geography) = common::domains();
    let cases = common::anonymization_cases();
    assert_eq!(cases.len(), 50);
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| {
            let d = if c.domain == "academic" { &academic } else { &geography };
            common::check_round_trip(c, d).err()
        })
        .collect();
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn hand_computed_tfidf_scores() {
    let index = EntityIndex::from_records(vec![
        rec("salt lake city", "city", "city_name"),
        rec("great salt lake", "lake", "lake_name"),
        rec("boston", "city", "city_name"),
    ]);
    // N = 3; salt and lake occur in two documents, everything else in one.
    let shared = (4.0f64 / 3.0).ln() + 1.0;
    let single = 2.0f64.ln() + 1.0;
    assert!((index.tfidf().idf("salt") - shared).abs() < 1e-12);
    assert!((index.tfidf().idf("city") - single).abs() < 1e-12);
    assert!((index.tfidf().idf("unseen") - (4.0f64.ln() + 1.0)).abs() < 1e-12);

    let q = text::words("salt lake");
    let both = 2.0f64.sqrt() * shared / (2.0 * shared * shared + single * single).sqrt();
    let scores = index.tfidf().scores(&q);
    assert!((scores[0] - both).abs() < 1e-12);
    assert!((scores[1] - both).abs() < 1e-12);
    assert_eq!(scores[2], 0.0);

    // Equal scores: the lexicographically first surface wins.
    let (best, score) = index.best_match(&q).unwrap();
    assert_eq!(index.records()[best].surface, "great salt lake");
    assert!((score - both).abs() < 1e-12);

    let (best, score) = index.best_match(&text::words("salt lake city")).unwrap();
    assert_eq!(index.records()[best].surface, "salt lake city");
    assert!((score - 1.0).abs() < 1e-12);

    // One of three equally weighted words.
    let exact = TfIdf::fit(vec![text::words("donald e knuth")]);
    assert!((exact.scores(&["knuth"])[0] - 1.0 / 3.0f64.sqrt()).abs() < 1e-12);
}

#[test]
fn below_threshold_is_left_alone() {
    let index = EntityIndex::from_records(vec![rec("Donald E. Knuth", "author", "author_name")]);
    // cos = 1/sqrt(3) < 0.6
    assert_eq!(index.anonymize_text("papers by knuth").text(), "papers by knuth");
    assert_eq!(index.anonymize_text("papers by donald knuth").text(), "papers by AUTHOR_NAME_1");
}

#[test]
fn training_pair_matches_inference_placeholders() {
    let (academic, _) = common::domains();
    let words = text::words("papers by Dan Klein in 2012");
    let pair = anonymize_sql_pair(
        &words,
        "SELECT paper.title FROM author , writes , paper WHERE author.author_name = 'Dan Klein' AND author.author_id = writes.author_id AND writes.paper_id = paper.paper_id AND paper.year = 2012",
        &academic.schema,
    );
    assert!(pair.is_aligned());
    let live = academic.index.anonymize_utterance(&words);
    assert_eq!(pair.utterance.tokens, live.tokens);
    assert!(pair.sql.contains("AUTHOR_NAME_1") && pair.sql.contains("YEAR_1"));
    let back = deanonymize(&text::sql_target_tokens(&pair.sql), &live.map).unwrap();
    assert!(back.contains("'Dan Klein'") && back.contains("= 2012"));
}

#[test]
fn unbound_placeholder_is_an_error() {
    let (academic, _) = common::domains();
    let a = academic.index.anonymize_text("papers by Dan Klein");
    let toks = ["SELECT", "*", "FROM", "venue", "WHERE", "venue_name", "=", "VENUE_NAME_1"];
    match deanonymize(&toks, &a.map) {
        Err(Error::UnboundPlaceholders(u)) => assert_eq!(u, ["VENUE_NAME_1"]),
        other => panic!("{other:?}"),
    }
}

const CITIES: [&str; 8] = ["boston", "austin", "houston", "dallas", "denver", "miami", "chicago", "reno"];

proptest! {
    #[test]
    fn placeholders_number_in_first_appearance_order(picks in proptest::collection::vec(0usize..CITIES.len(), 1..7)) {
        let (_, geography) = common::domains();
        let utterance = format!("compare {}", picks.iter().map(|&i| CITIES[i]).collect::<Vec<_>>().join(" and "));
        let a = geography.index.anonymize_text(&utterance);
        let mut order: Vec<usize> = Vec::new();
        for &p in &picks {
            if !order.contains(&p) {
                order.push(p);
            }
        }
        let expected: Vec<String> = picks
            .iter()
            .map(|p| format!("CITY_NAME_{}", order.iter().position(|o| o == p).unwrap() + 1))
            .collect();
        let got: Vec<String> = a.tokens.iter().filter(|t| text::is_placeholder(t)).cloned().collect();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(a.map.len(), order.len());
        prop_assert_eq!(a.restore(), utterance);
    }
}
