//! Train a small parser on template data and decode a few questions with beam search.
use std::time::Instant;

use nlidb::fixtures;
use nlidb::model::{train, TrainConfig};
use nlidb::template::{bundled_templates, generate_seed_dataset};

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    let data: Vec<_> = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 3, 1)?
        .iter()
        .map(|g| g.to_example())
        .collect();
    let config = TrainConfig {
        hidden_dim: 48,
        embed_dim: 32,
        epochs: 120,
        minibatch: 8,
        learning_rate: 0.005,
        dropout_rate: 0.1,
        min_word_count: 1,
        rng_seed: 1,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let model = train(&data, &[], &config)?;
    println!("trained on {} examples in {:.1?}", data.len(), t0.elapsed());

    for q in ["list all river", "how many city are there", "what is the population of state texas"] {
        let p = model.predict(&d.index, q)?;
        println!("\n{q}\n  anonymized: {}\n  decoded:    {}", p.utterance.text(), p.anonymized_sql);
        match p.sql() {
            Some(sql) => println!("  sql:        {sql}  (log p {:.2})", p.log_prob),
            None => println!("  unusable:   {:?}", p.outcome),
        }
    }
    Ok(())
}
