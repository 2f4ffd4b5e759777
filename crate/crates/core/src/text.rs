//! Tokenizers shared by the anonymizer, the templates and the parser.
//!
//! Utterances are split into lowercase word tokens. Typed placeholders such as
//! `CITY_NAME_1` survive tokenization untouched on both the utterance and the
//! SQL side, which is what lets the model copy them through.

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+(?:'\w+)?").unwrap());
static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Z][A-Z0-9]*(?:_[A-Z0-9]+)*_[0-9]+$").unwrap());

pub fn is_placeholder(token: &str) -> bool {
    PLACEHOLDER.is_match(token)
}

/// Splits a placeholder into its type base and number: `CITY_NAME_2` -> (`CITY_NAME`, 2).
pub fn split_placeholder(token: &str) -> Option<(&str, usize)> {
    if !is_placeholder(token) {
        return None;
    }
    let idx = token.rfind('_')?;
    Some((&token[..idx], token[idx + 1..].parse().ok()?))
}

/// Word tokens of an utterance; placeholders keep their case, everything else is lowercased.
pub fn words(text: &str) -> Vec<String> {
    WORD.find_iter(text)
        .map(|m| {
            let w = m.as_str();
            if is_placeholder(w) {
                w.to_string()
            } else {
                w.to_lowercase()
            }
        })
        .collect()
}

/// `author_name` -> `AUTHOR_NAME`; non-alphanumerics become underscores.
pub fn type_base(column: &str) -> String {
    column
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect()
}

const SQL_KEYWORDS: &[&str] = &[
    "SELECT", "DISTINCT", "FROM", "WHERE", "AND", "OR", "NOT", "IN", "AS", "ORDER", "BY", "GROUP",
    "HAVING", "LIMIT", "ASC", "DESC", "COUNT", "MAX", "MIN", "AVG", "SUM", "JOIN", "ON", "IS",
    "NULL", "LIKE", "BETWEEN", "UNION", "EXCEPT", "INTERSECT", "EXISTS", "CASE", "WHEN", "THEN",
    "ELSE", "END", "INNER", "LEFT", "OUTER", "ALL", "OFFSET",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SqlToken {
    Keyword(String),
    Ident(String),
    Placeholder(String),
    /// Unescaped string literal contents.
    Str(String),
    Number(String),
    Symbol(String),
}

impl SqlToken {
    pub fn text(&self) -> String {
        match self {
            SqlToken::Str(s) => format!("'{}'", s.replace('\'', "''")),
            SqlToken::Keyword(s)
            | SqlToken::Ident(s)
            | SqlToken::Placeholder(s)
            | SqlToken::Number(s)
            | SqlToken::Symbol(s) => s.clone(),
        }
    }
}

impl fmt::Display for SqlToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// Lexes SQL into tokens. Keywords are uppercased and identifiers lowercased;
/// `table.column` stays a single identifier. A trailing `;` is dropped.
pub fn sql_tokens(sql: &str) -> Vec<SqlToken> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() || c == ';' {
            i += 1;
        } else if c == '\'' || c == '"' {
            let quote = c;
            let mut s = String::new();
            i += 1;
            while i < chars.len() {
                if chars[i] == quote {
                    if i + 1 < chars.len() && chars[i + 1] == quote {
                        s.push(quote);
                        i += 2;
                        continue;
                    }
                    i += 1;
                    break;
                }
                s.push(chars[i]);
                i += 1;
            }
            out.push(SqlToken::Str(s));
        } else if c.is_ascii_digit()
            || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()))
        {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(SqlToken::Number(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '.')
            {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let upper = word.to_uppercase();
            if is_placeholder(&word) {
                out.push(SqlToken::Placeholder(word));
            } else if SQL_KEYWORDS.contains(&upper.as_str()) {
                out.push(SqlToken::Keyword(upper));
            } else {
                out.push(SqlToken::Ident(word.to_lowercase()));
            }
        } else {
            let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            if matches!(two.as_str(), ">=" | "<=" | "<>" | "!=" | "||") {
                out.push(SqlToken::Symbol(two));
                i += 2;
            } else {
                out.push(SqlToken::Symbol(c.to_string()));
                i += 1;
            }
        }
    }
    out
}

/// Space-joined token texts: the canonical form SQL is stored and decoded in.
pub fn join_sql(tokens: &[SqlToken]) -> String {
    tokens.iter().map(SqlToken::text).collect::<Vec<_>>().join(" ")
}

pub fn canonical_sql(sql: &str) -> String {
    join_sql(&sql_tokens(sql))
}

/// Splits canonical SQL into decoder target tokens. String literals stay whole.
pub fn sql_target_tokens(sql: &str) -> Vec<String> {
    sql_tokens(sql).iter().map(SqlToken::text).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_lowercase_but_keep_placeholders() {
        assert_eq!(
            words("How many people live in CITY_NAME_1?"),
            vec!["how", "many", "people", "live", "in", "CITY_NAME_1"]
        );
        assert_eq!(words("Donald E. Knuth"), vec!["donald", "e", "knuth"]);
        assert_eq!(words("  trailing   space  "), words("trailing space"));
    }

    #[test]
    fn placeholder_shape() {
        assert!(is_placeholder("CITY_NAME_1"));
        assert!(is_placeholder("YEAR_12"));
        assert!(!is_placeholder("CITY_NAME"));
        assert!(!is_placeholder("ICRA"));
        assert!(!is_placeholder("city_name_1"));
        assert_eq!(split_placeholder("AUTHOR_NAME_3"), Some(("AUTHOR_NAME", 3)));
    }

    #[test]
    fn type_base_of_columns() {
        assert_eq!(type_base("city_name"), "CITY_NAME");
        assert_eq!(type_base("year"), "YEAR");
        assert_eq!(type_base("first-name"), "FIRST_NAME");
    }

    #[test]
    fn sql_lexing() {
        let toks = sql_tokens("select City.city_name from city where city.state_name='O''Hare' and x>=2;");
        assert_eq!(
            join_sql(&toks),
            "SELECT city.city_name FROM city WHERE city.state_name = 'O''Hare' AND x >= 2"
        );
        assert_eq!(toks[7], SqlToken::Str("O'Hare".into()));
        assert_eq!(
            canonical_sql("SELECT COUNT(*) FROM t WHERE t.c = CITY_NAME_1"),
            "SELECT COUNT ( * ) FROM t WHERE t.c = CITY_NAME_1"
        );
    }

    #[test]
    fn canonical_is_idempotent() {
        let once = canonical_sql("select a.b,c from a where a.b = 'x y' order by c desc limit 1");
        assert_eq!(canonical_sql(&once), once);
    }
}
