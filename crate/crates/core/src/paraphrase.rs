//! Single-word paraphrase substitution for training-set expansion.
//!
//! Paraphrase files hold one `source<TAB>target<TAB>score` entry per line.
//! The score column is parsed but currently unused.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Example, Provenance};
use crate::error::{Error, Result};
use crate::stopwords;
use crate::text;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParaphraseTable {
    /// word -> alternatives, each a word sequence (one-one or one-many).
    pub entries: BTreeMap<String, Vec<Vec<String>>>,
    pub stopwords: HashSet<String>,
}

impl ParaphraseTable {
    pub fn new() -> Self {
        ParaphraseTable {
            entries: BTreeMap::new(),
            stopwords: stopwords::default_set().clone(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(content: &str) -> Result<Self> {
        let mut table = ParaphraseTable::new();
        for (i, line) in content.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if !(2..=3).contains(&fields.len()) {
                return Err(Error::ParaphraseLine {
                    line: line_no,
                    message: format!("expected 2 or 3 tab-separated fields, got {}", fields.len()),
                });
            }
            if let Some(score) = fields.get(2) {
                score.trim().parse::<f64>().map_err(|_| Error::ParaphraseLine {
                    line: line_no,
                    message: format!("bad score `{score}`"),
                })?;
            }
            let source = text::words(fields[0]);
            let target = text::words(fields[1]);
            if source.len() != 1 {
                return Err(Error::ParaphraseLine {
                    line: line_no,
                    message: "source must be a single word".into(),
                });
            }
            if target.is_empty() {
                return Err(Error::ParaphraseLine {
                    line: line_no,
                    message: "empty target".into(),
                });
            }
            table.insert(&source[0], target);
        }
        Ok(table)
    }

    pub fn insert(&mut self, source: &str, alternative: Vec<String>) {
        let alts = self.entries.entry(source.to_lowercase()).or_default();
        if !alts.contains(&alternative) {
            alts.push(alternative);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alternatives(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    fn eligible(&self, word: &str) -> bool {
        !text::is_placeholder(word) && !self.stopwords.contains(word) && self.entries.contains_key(word)
    }

    /// Positions in `tokens` that may be paraphrased.
    pub fn eligible_positions(&self, tokens: &[String]) -> Vec<usize> {
        (0..tokens.len()).filter(|&i| self.eligible(&tokens[i])).collect()
    }

    /// Replaces one uniformly chosen eligible word with a uniformly chosen alternative.
    pub fn paraphrase<R: Rng>(&self, tokens: &[String], rng: &mut R) -> Vec<String> {
        let positions = self.eligible_positions(tokens);
        let Some(&pos) = positions.choose(rng) else {
            return tokens.to_vec();
        };
        let alt = self.entries[&tokens[pos]].choose(rng).unwrap();
        splice(tokens, pos, alt)
    }

    /// Adds up to `k` distinct paraphrases per example, each paired with the
    /// source SQL. Originals are always kept; utterances already present are skipped.
    pub fn augment(&self, dataset: &[Example], k: usize, seed: u64) -> Vec<Example> {
        let mut out: Vec<Example> = dataset.to_vec();
        if k == 0 {
            return out;
        }
        let mut seen: HashSet<String> = dataset.iter().map(Example::utterance_text).collect();
        for (i, ex) in dataset.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            // Remaining alternatives per eligible position; draws are without replacement.
            let mut pool: Vec<(usize, Vec<&Vec<String>>)> = self
                .eligible_positions(&ex.utterance)
                .into_iter()
                .map(|p| (p, self.entries[&ex.utterance[p]].iter().collect()))
                .collect();
            let mut added = 0;
            while added < k && !pool.is_empty() {
                let pi = rng.gen_range(0..pool.len());
                let ai = rng.gen_range(0..pool[pi].1.len());
                let alt = pool[pi].1.swap_remove(ai);
                let pos = pool[pi].0;
                if pool[pi].1.is_empty() {
                    pool.swap_remove(pi);
                }
                let tokens = splice(&ex.utterance, pos, alt);
                if seen.insert(tokens.join(" ")) {
                    out.push(Example {
                        utterance: tokens,
                        sql: ex.sql.clone(),
                        provenance: Provenance::Paraphrase,
                    });
                    added += 1;
                }
            }
        }
        out
    }
}

fn splice(tokens: &[String], pos: usize, alt: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len() + alt.len());
    out.extend_from_slice(&tokens[..pos]);
    out.extend(alt.iter().cloned());
    out.extend_from_slice(&tokens[pos + 1..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        text::words(s)
    }

    #[test]
    fn single_entry_forces_substitution() {
        let t = ParaphraseTable::parse("largest\tbiggest\t0.9\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            t.paraphrase(&toks("what is the largest city"), &mut rng),
            toks("what is the biggest city")
        );
    }

    #[test]
    fn one_many_entries() {
        let t = ParaphraseTable::parse("cites\trefers to\t0.5\ncites\trefers to\t0.4\n").unwrap();
        assert_eq!(t.alternatives("cites").unwrap(), &[toks("refers to")]);
    }

    #[test]
    fn placeholders_and_stopwords_untouched() {
        let t = ParaphraseTable::parse("in\tinside\t1\n").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = toks("in CITY_NAME_1");
        assert_eq!(t.paraphrase(&u, &mut rng), u);
        let mut t2 = ParaphraseTable::new();
        t2.entries.insert("CITY_NAME_1".into(), vec![toks("boston")]);
        assert_eq!(t2.paraphrase(&u, &mut rng), u);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        match ParaphraseTable::parse("a\tb\t1\nbroken line\n") {
            Err(Error::ParaphraseLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(ParaphraseTable::parse("a\tb\tnotanumber\n").is_err());
        assert!(ParaphraseTable::parse("two words\tb\t1\n").is_err());
    }

    #[test]
    fn empty_table_is_identity() {
        let t = ParaphraseTable::parse("").unwrap();
        let ex = vec![Example::new(toks("show all cities"), "SELECT 1", Provenance::Template)];
        assert_eq!(t.augment(&ex, 3, 0), ex);
    }

    #[test]
    fn k_zero_is_identity() {
        let t = ParaphraseTable::parse("cities\ttowns\t1\n").unwrap();
        let ex = vec![Example::new(toks("show all cities"), "SELECT 1", Provenance::Template)];
        assert_eq!(t.augment(&ex, 0, 0), ex);
    }
}
