//! Start the HTTP service on a free port and exercise it with plain HTTP requests.
use std::io::{Read, Write};
use std::net::TcpStream;

use nlidb::fixtures;
use nlidb::learner::{Learner, LearnerConfig};
use nlidb::model::{train, TrainConfig};
use nlidb::service::{router, AppState, ServiceConfig};
use nlidb::template::{bundled_templates, generate_seed_dataset};

fn request(port: u16, method: &str, path: &str, body: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    let (head, body) = out.split_once("\r\n\r\n").unwrap_or((&out, ""));
    format!("{}\n{}", head.lines().next().unwrap_or(""), body.trim())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let d = fixtures::geography()?;
    let data: Vec<_> = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 2, 0)?
        .iter()
        .map(|g| g.to_example())
        .collect();
    let config = TrainConfig { hidden_dim: 32, embed_dim: 32, epochs: 30, minibatch: 8, learning_rate: 0.005, min_word_count: 1, ..TrainConfig::default() };
    let model = train(&data, &[], &config)?;
    let mut learner = Learner::new(d.schema.clone(), d.db.clone(), d.index.clone(), LearnerConfig { train: config, paraphrases_per_example: 0 });
    learner.add_examples(data);
    let state = AppState::new(
        learner,
        Some(model),
        ServiceConfig { example_utterances: fixtures::example_utterances("geography"), ..ServiceConfig::default() },
    );

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let port = listener.local_addr()?.port();
    rt.spawn(async move { axum::serve(listener, router(state)).await });
    println!("listening on http://127.0.0.1:{port}\n");

    let parsed = request(port, "POST", "/parse", r#"{"question": "what is the capital of texas"}"#);
    println!("POST /parse\n{parsed}\n");
    let id = parsed
        .split("\"parse_id\":\"")
        .nth(1)
        .and_then(|s| s.split('"').next())
        .unwrap_or("missing");
    let body = format!(r#"{{"parse_id": "{id}", "label": "WrongResult"}}"#);
    println!("POST /feedback\n{}\n", request(port, "POST", "/feedback", &body));
    println!("GET /status\n{}", request(port, "GET", "/status", ""));
    Ok(())
}
