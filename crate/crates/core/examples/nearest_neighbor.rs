//! TF-IDF nearest-neighbor baseline: copy the SQL of the most similar training question.
use nlidb::fixtures;
use nlidb::learner::{NearestNeighborParser, SqlParser};
use nlidb::model::NearestNeighbor;
use nlidb::template::{bundled_templates, generate_seed_dataset};

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    let data: Vec<_> = generate_seed_dataset(&bundled_templates(), &d.schema, &d.db, 3, 2)?
        .iter()
        .map(|g| g.to_example())
        .collect();
    let nn = NearestNeighbor::fit(&data)?;
    let parser = NearestNeighborParser { nn: nn.clone(), index: d.index.clone() };
    for q in ["how many people live in dallas", "show me every river", "what states border kansas"] {
        let anon = d.index.anonymize_text(q);
        let (i, score) = nn.neighbor(&anon.tokens);
        println!("{q}\n  neighbor ({score:.2}): {}\n  sql: {:?}", data[i].utterance.join(" "), parser.parse(q));
    }
    Ok(())
}
