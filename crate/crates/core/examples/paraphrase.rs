//! Augment a dataset with paraphrases drawn from a word-level table.
use nlidb::dataset::{Example, Provenance};
use nlidb::paraphrase::ParaphraseTable;

fn main() -> nlidb::Result<()> {
    let table = ParaphraseTable::parse("biggest\tlargest\nbiggest\tgreatest\ncity\ttown\npeople\tresidents\n")?;
    let data = vec![Example::new(
        nlidb::text::words("how many people live in the biggest city"),
        "SELECT population FROM city ORDER BY population DESC LIMIT 1",
        Provenance::Template,
    )];
    for ex in table.augment(&data, 5, 1) {
        println!("{:<12?} {}", ex.provenance, ex.utterance.join(" "));
    }
    Ok(())
}
