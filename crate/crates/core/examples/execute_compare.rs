//! Run queries read-only and compare them by denotation.
use nlidb::executor::denotation_equal;
use nlidb::fixtures;

fn main() -> nlidb::Result<()> {
    let d = fixtures::geography()?;
    let gold = "SELECT city_name FROM city WHERE state_name = 'texas' ORDER BY city_name";
    let candidates = [
        "SELECT city_name FROM city WHERE state_name = 'texas'",
        "SELECT city.city_name FROM city JOIN state ON city.state_name = state.state_name WHERE state.abbreviation = 'TX'",
        "SELECT city_name FROM city WHERE state_name = 'ohio'",
        "DELETE FROM city",
        "SELECT nope FROM city",
    ];
    let g = d.db.execute_default(gold).expect("gold query runs");
    println!("gold: {} rows in {:?}", g.rows.len(), g.elapsed);
    for sql in candidates {
        match d.db.execute_default(sql) {
            Ok(r) => println!("{:<5} {sql}", denotation_equal(&r, &g).equal),
            Err(e) => println!("error {sql}\n      {e}"),
        }
    }
    Ok(())
}
