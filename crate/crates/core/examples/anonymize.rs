//! Replace entity mentions with typed placeholders and put them back.
use nlidb::anonymize::{anonymize_sql_pair, deanonymize};
use nlidb::{fixtures, text};

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    for q in ["how many people live in boston", "how far is el paso from los angeles", "what is the capital of utah"] {
        let anon = d.index.anonymize_text(q);
        println!("{q}\n  -> {}", anon.text());
        for m in &anon.mentions {
            println!("     {} = {:?}", m.placeholder, m.text);
        }
    }

    let sql = "SELECT population FROM city WHERE city_name = 'boston'";
    let pair = anonymize_sql_pair(&text::words("how many people live in boston"), sql, &d.schema);
    println!("\ntraining pair:\n  {}\n  {}", pair.utterance.text(), pair.sql);
    println!("restored: {}", deanonymize(&text::sql_target_tokens(&pair.sql), &pair.utterance.map)?);
    Ok(())
}
