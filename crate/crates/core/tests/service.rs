use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use nlidb::dataset::{Example, Provenance};
use nlidb::fixtures;
use nlidb::learner::{Learner, LearnerConfig};
use nlidb::model::{train, Seq2Seq, TrainConfig};
use nlidb::service::{router, AppState, ParseResponse, QueryResults, ServiceConfig, StatusResponse};
use nlidb::text;
use serde_json::{json, Value};
use tower::ServiceExt;

const JORDAN_SQL: &str = "SELECT DISTINCT paper.title FROM author , writes , paper , venue WHERE author.author_id = writes.author_id AND writes.paper_id = paper.paper_id AND paper.venue_id = venue.venue_id AND author.author_name = AUTHOR_NAME_1 AND venue.venue_name = VENUE_NAME_1 AND paper.year = YEAR_1";

fn tiny_config() -> TrainConfig {
    TrainConfig {
        hidden_dim: 16,
        embed_dim: 8,
        epochs: 60,
        minibatch: 2,
        dropout_rate: 0.0,
        learning_rate: 0.02,
        min_word_count: 1,
        ..TrainConfig::default()
    }
}

fn tiny_model() -> Seq2Seq {
    let config = TrainConfig {
        hidden_dim: 32,
        embed_dim: 16,
        epochs: 400,
        learning_rate: 0.01,
        ..tiny_config()
    };
    let data = vec![
        Example::new(text::words("paper by AUTHOR_NAME_1 in VENUE_NAME_1 in YEAR_1"), JORDAN_SQL, Provenance::Template),
        Example::new(text::words("list all venues"), "SELECT DISTINCT venue.venue_name FROM venue", Provenance::Template),
    ];
    train(&data, &[], &config).unwrap()
}

fn app(model: Option<Seq2Seq>) -> Arc<AppState> {
    let d = fixtures::academic().unwrap();
    let config = LearnerConfig {
        train: tiny_config(),
        paraphrases_per_example: 0,
    };
    let learner = Learner::new(d.schema.clone(), d.db.clone(), d.index.clone(), config);
    let service = ServiceConfig {
        annotator_token: "secret".into(),
        example_utterances: d.example_utterances(),
        ..ServiceConfig::default()
    };
    AppState::new(learner, model, service)
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn parse(state: &Arc<AppState>, question: &str) -> ParseResponse {
    let (status, body) = call(state, "POST", "/parse", Some(json!({ "question": question })), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_value(body).unwrap()
}

#[tokio::test]
async fn parse_returns_three_typed_mentions_and_rows() {
    let state = app(Some(tiny_model()));
    let r = parse(&state, "paper by Michael I. Jordan in ICRA in 2016").await;
    assert_eq!(r.parse_id.len(), 32);
    assert_eq!(r.tokens, text::words("paper by Michael I. Jordan in ICRA in 2016"));
    let types: Vec<&str> = r.mentions.iter().map(|m| m.type_base.as_str()).collect();
    assert_eq!(types, ["AUTHOR_NAME", "VENUE_NAME", "YEAR"]);
    assert_eq!((r.mentions[0].start, r.mentions[0].end), (2, 5));
    assert_eq!(r.mentions[0].surface, "Michael I. Jordan");
    assert_eq!(r.anonymized_sql.as_deref(), Some(JORDAN_SQL));
    assert!(r.sql.as_deref().unwrap().contains("'Michael I. Jordan'"));
    match &r.results {
        QueryResults::Rows(rows) => {
            let mut titles: Vec<String> = rows.rows.iter().map(|row| row[0].render()).collect();
            titles.sort();
            // Papers 4 and 14: both by Jordan at ICRA in 2016.
            assert_eq!(titles, ["Bayesian Nonparametrics for Robotics", "Robot Grasping with Variational Policies"]);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(r.snapshot_id, 1);
    assert!(!r.example_utterances.is_empty());
}

#[tokio::test]
async fn parse_without_model_reports_failure() {
    let state = app(None);
    let r = parse(&state, "list all venues").await;
    assert!(r.sql.is_none());
    match r.results {
        QueryResults::Failed { error } => assert_eq!(error.kind, "no_model"),
        other => panic!("{other:?}"),
    }
    let (status, _) = call(&state, "POST", "/parse", Some(json!({ "question": "  ?! " })), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn feedback_routes_and_rejects_repeats() {
    let state = app(Some(tiny_model()));
    let r = parse(&state, "paper by Michael I. Jordan in ICRA in 2016").await;
    let (status, body) = call(&state, "POST", "/feedback", Some(json!({ "parse_id": r.parse_id, "label": "Correct" })), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["action"], "added_to_training");
    assert_eq!(body["training_size"], 1);
    let (status, _) = call(&state, "POST", "/feedback", Some(json!({ "parse_id": r.parse_id, "label": "Correct" })), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&state, "POST", "/feedback", Some(json!({ "parse_id": "nope", "label": "Correct" })), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let r = parse(&state, "list all venues").await;
    let (status, body) = call(&state, "POST", "/feedback", Some(json!({ "parse_id": r.parse_id, "label": "Wrong Result" })), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["action"], "queued_for_annotation");
    assert_eq!(body["task_id"], 1);
    assert_eq!(body["queue_depth"], 1);
}

#[tokio::test]
async fn annotation_endpoints() {
    let state = app(Some(tiny_model()));
    let r = parse(&state, "list all venues").await;
    call(&state, "POST", "/feedback", Some(json!({ "parse_id": r.parse_id, "label": "CantTell" })), None).await;

    let (status, _) = call(&state, "GET", "/annotations/next", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&state, "GET", "/annotations/next", None, Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, task) = call(&state, "GET", "/annotations/next", None, Some("secret")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["id"], 1);
    assert_eq!(task["utterance"], "list all venues");
    assert_eq!(task["reason"], "CantTell");

    let bad = json!({ "gold_sql": "SELECT venue_nam FROM venue" });
    let (status, body) = call(&state, "POST", "/annotations/1", Some(bad), Some("secret")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["diagnostics"].to_string().contains("venue_nam"), "{body}");

    let good = json!({ "gold_sql": "SELECT DISTINCT venue_name FROM venue" });
    let (status, _) = call(&state, "POST", "/annotations/7", Some(good.clone()), Some("secret")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, body) = call(&state, "POST", "/annotations/1", Some(good.clone()), Some("secret")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((body["added"].clone(), body["training_size"].clone()), (json!(true), json!(1)));
    let (status, _) = call(&state, "POST", "/annotations/1", Some(good), Some("secret")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&state, "GET", "/annotations/next", None, Some("secret")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn retrain_swaps_snapshot_and_rejects_overlap() {
    let state = app(None);
    let d = fixtures::academic().unwrap();
    // Enough data that one retrain outlasts the follow-up request.
    let seed = nlidb::template::generate_seed_dataset(&nlidb::template::bundled_templates(), &d.schema, &d.db, 30, 0).unwrap();
    state.with_learner(|l| l.add_examples(seed.iter().map(|g| g.to_example())));

    let (status, body) = call(&state, "POST", "/retrain", None, None).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(body["closing_stage"], 1);
    let (status, _) = call(&state, "POST", "/retrain", None, None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut done = None;
    for _ in 0..600 {
        let (_, body) = call(&state, "GET", "/status", None, None).await;
        let s: StatusResponse = serde_json::from_value(body).unwrap();
        if !s.retraining {
            done = Some(s);
            break;
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
    let s = done.expect("retrain finished");
    assert_eq!((s.stage, s.snapshot_id, s.queue_depth), (2, 2, 0));
    assert_eq!(s.last_report.unwrap().stage, 1);
    assert!(state.snapshot().model.is_some());
}

#[tokio::test]
async fn status_and_examples() {
    let state = app(None);
    let (status, body) = call(&state, "GET", "/status", None, None).await;
    assert_eq!(status, StatusCode::OK);
    let s: StatusResponse = serde_json::from_value(body).unwrap();
    assert_eq!((s.stage, s.training_size, s.queue_depth, s.snapshot_id, s.retraining), (1, 0, 0, 1, false));
    assert!(s.last_report.is_none());
    let (status, body) = call(&state, "GET", "/examples", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["examples"], json!(fixtures::example_utterances("academic")));
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let state = app(None);
    let req = Request::builder()
        .method("GET")
        .uri("/status")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = router(state).oneshot(req).await.unwrap();
    assert_eq!(resp.headers()["access-control-allow-origin"], "*");
}
