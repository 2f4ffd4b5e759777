//! Instantiate the bundled schema templates into a seed training set.
use std::time::Instant;

use nlidb::fixtures;
use nlidb::template::{bundled_templates, generate_seed_dataset};

fn main() -> nlidb::Result<()> {
    let d = fixtures::academic()?;
    let t0 = Instant::now();
    let examples = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 5, 0)?;
    println!("{} examples in {:.2?}", examples.len(), t0.elapsed());
    for ex in examples.iter().step_by(examples.len().max(8) / 8) {
        println!("{:<24} {}\n{:<24} {}", ex.template_id, ex.utterance.text(), "", ex.sql);
    }
    Ok(())
}
