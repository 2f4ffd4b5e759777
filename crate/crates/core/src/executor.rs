//! SQL execution against the target database and denotation comparison.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

static MEMORY_DB_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Handle to a SQLite database. Every query opens its own read-only connection.
///
/// Databases loaded from a SQL dump live in a named shared-cache in-memory
/// database, kept alive by an anchor connection owned by this handle.
pub struct Database {
    uri: String,
    flags: OpenFlags,
    _anchor: Option<Mutex<Connection>>,
}

impl std::fmt::Debug for Database {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Database").field("uri", &self.uri).finish()
    }
}

impl Database {
    /// Opens an existing SQLite database file.
    pub fn open(path: impl AsRef<Path>) -> Result<Database> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "database file not found"),
            ));
        }
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        Connection::open_with_flags(path, flags)?;
        Ok(Database {
            uri: path.to_string_lossy().into_owned(),
            flags,
            _anchor: None,
        })
    }

    /// Builds an in-memory database from SQL text (schema plus inserts).
    pub fn from_sql(dump: &str) -> Result<Database> {
        let id = MEMORY_DB_COUNTER.fetch_add(1, AtomicOrdering::Relaxed);
        let uri = format!(
            "file:nlidb-mem-{}-{}?mode=memory&cache=shared",
            std::process::id(),
            id
        );
        let rw = OpenFlags::SQLITE_OPEN_READ_WRITE
            | OpenFlags::SQLITE_OPEN_CREATE
            | OpenFlags::SQLITE_OPEN_URI
            | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        let anchor = Connection::open_with_flags(&uri, rw)?;
        anchor.execute_batch(dump)?;
        Ok(Database {
            uri,
            flags: OpenFlags::SQLITE_OPEN_READ_ONLY
                | OpenFlags::SQLITE_OPEN_URI
                | OpenFlags::SQLITE_OPEN_NO_MUTEX,
            _anchor: Some(Mutex::new(anchor)),
        })
    }

    /// Opens a `.sql` dump (loaded into memory) or a SQLite file.
    pub fn load(path: impl AsRef<Path>) -> Result<Database> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "sql") {
            let dump = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Database::from_sql(&dump)
        } else {
            Database::open(path)
        }
    }

    pub fn connect(&self) -> Result<Connection> {
        let conn = Connection::open_with_flags(&self.uri, self.flags)?;
        // Shared-cache memory databases do not honour the read-only open flag.
        conn.pragma_update(None, "query_only", true)?;
        Ok(conn)
    }

    /// Runs `sql` with a deadline. SQL errors come back as [`ExecError`], never as a panic.
    pub fn execute(&self, sql: &str, timeout: Duration) -> Result<ExecutionResult, ExecError> {
        let start = Instant::now();
        let conn = self
            .connect()
            .map_err(|e| ExecError::Connection(e.to_string()))?;
        let deadline = start + timeout;
        conn.progress_handler(1000, Some(move || Instant::now() > deadline))
            .map_err(|e| ExecError::Connection(e.to_string()))?;
        let out = run_query(&conn, sql);
        match out {
            Ok((columns, rows)) => Ok(ExecutionResult {
                empty: rows.is_empty(),
                columns,
                rows,
                elapsed: start.elapsed(),
            }),
            Err(e) if Instant::now() > deadline => {
                let _ = e;
                Err(ExecError::Timeout(timeout))
            }
            Err(e) => Err(ExecError::Sql(e.to_string())),
        }
    }

    pub fn execute_default(&self, sql: &str) -> Result<ExecutionResult, ExecError> {
        self.execute(sql, DEFAULT_TIMEOUT)
    }

    /// Distinct non-null values of a column rendered as text, in first-seen order.
    pub fn distinct_values(&self, table: &str, column: &str) -> Result<Vec<String>> {
        let conn = self.connect()?;
        let sql = format!(
            "SELECT DISTINCT \"{column}\" FROM \"{table}\" WHERE \"{column}\" IS NOT NULL ORDER BY rowid"
        );
        let mut stmt = conn.prepare(&sql).or_else(|_| {
            conn.prepare(&format!(
                "SELECT DISTINCT \"{column}\" FROM \"{table}\" WHERE \"{column}\" IS NOT NULL"
            ))
        })?;
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(Value::from(row.get_ref(0)?).render());
        }
        Ok(out)
    }

    pub fn location(&self) -> PathBuf {
        PathBuf::from(&self.uri)
    }
}

fn run_query(conn: &Connection, sql: &str) -> rusqlite::Result<(Vec<String>, Vec<Vec<Value>>)> {
    let mut stmt = conn.prepare(sql)?;
    let columns: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
    let n = columns.len();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut vals = Vec::with_capacity(n);
        for i in 0..n {
            vals.push(Value::from(row.get_ref(i)?));
        }
        out.push(vals);
    }
    Ok((columns, out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
pub enum ExecError {
    #[error("cannot connect: {0}")]
    Connection(String),
    #[error("{0}")]
    Sql(String),
    #[error("query exceeded {0:?}")]
    Timeout(Duration),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl From<ValueRef<'_>> for Value {
    fn from(v: ValueRef<'_>) -> Self {
        match v {
            ValueRef::Null => Value::Null,
            ValueRef::Integer(i) => Value::Integer(i),
            ValueRef::Real(f) => Value::Real(f),
            ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Value::Blob(b.to_vec()),
        }
    }
}

impl Value {
    pub fn render(&self) -> String {
        match self {
            Value::Null => "NULL".into(),
            Value::Integer(i) => i.to_string(),
            Value::Real(f) => f.to_string(),
            Value::Text(s) => s.clone(),
            Value::Blob(b) => format!("<{} bytes>", b.len()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Integer(_) | Value::Real(_) => 1,
            Value::Text(_) => 2,
            Value::Blob(_) => 3,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Integer(i) => Some(*i as f64),
            Value::Real(f) => Some(*f),
            _ => None,
        }
    }
}

/// Total order: NULL < numbers < text < blobs. Integers and reals compare by value.
impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::Integer(a), Value::Integer(b)) => a.cmp(b),
            (Value::Text(a), Value::Text(b)) => a.cmp(b),
            (Value::Blob(a), Value::Blob(b)) => a.cmp(b),
            (a, b) if a.rank() == 1 && b.rank() == 1 => {
                a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())
            }
            (a, b) => a.rank().cmp(&b.rank()),
        }
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Value {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    #[serde(with = "duration_ms")]
    pub elapsed: Duration,
    pub empty: bool,
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Denotation {
    pub equal: bool,
    /// Both sides returned zero rows; equal, but usually a spurious match.
    pub empty_match: bool,
}

/// Multiset equality of rows. Column order matters, column names do not.
pub fn denotation_equal(a: &ExecutionResult, b: &ExecutionResult) -> Denotation {
    let empty_match = a.rows.is_empty() && b.rows.is_empty();
    if a.columns.len() != b.columns.len() && !empty_match {
        return Denotation {
            equal: false,
            empty_match,
        };
    }
    let mut ra = a.rows.clone();
    let mut rb = b.rows.clone();
    ra.sort();
    rb.sort();
    Denotation {
        equal: ra == rb,
        empty_match,
    }
}
