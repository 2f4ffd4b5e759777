//! Shortest foreign-key join paths between tables of the academic schema.
use nlidb::fixtures;

fn main() -> nlidb::Result<()> {
    let d = fixtures::academic()?;
    for (a, b) in [("author", "dataset"), ("venue", "keyphrase"), ("author", "author")] {
        let path = d.schema.shortest_join_path(a, b)?;
        let (from, cond) = path.join_clauses();
        println!("{a} -> {b}: {}", path.tables.join(" -> "));
        if !path.join_conditions.is_empty() {
            let sql = format!("SELECT COUNT ( * ) FROM {from} WHERE {cond}");
            let rows = d.db.execute_default(&sql).expect("join executes");
            println!("  {sql}\n  -> {:?}", rows.rows[0]);
        }
    }
    Ok(())
}
