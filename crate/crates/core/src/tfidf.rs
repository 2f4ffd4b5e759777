//! TF-IDF over lowercase word unigrams with cosine similarity.
//!
//! Weights: `tf = raw count`, `idf = ln((1 + N) / (1 + df)) + 1`, vectors
//! L2-normalized. Terms absent from the collection take the `df = 0` weight,
//! so unknown words pull a query's similarity down rather than being ignored.

use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Default)]
pub struct TfIdf {
    idf: HashMap<String, f64>,
    unseen_idf: f64,
    vectors: Vec<SparseVec>,
}

/// Sorted (term, weight) pairs with unit L2 norm (or empty).
pub type SparseVec = Vec<(String, f64)>;

impl TfIdf {
    pub fn fit<I, D, S>(docs: I) -> TfIdf
    where
        I: IntoIterator<Item = D>,
        D: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let docs: Vec<Vec<String>> = docs
            .into_iter()
            .map(|d| d.into_iter().map(|s| s.as_ref().to_lowercase()).collect())
            .collect();
        let n = docs.len() as f64;
        let mut df: HashMap<String, usize> = HashMap::new();
        for d in &docs {
            let mut seen: Vec<&String> = d.iter().collect();
            seen.sort();
            seen.dedup();
            for t in seen {
                *df.entry(t.clone()).or_default() += 1;
            }
        }
        let idf: HashMap<String, f64> = df
            .into_iter()
            .map(|(t, c)| (t, ((1.0 + n) / (1.0 + c as f64)).ln() + 1.0))
            .collect();
        let mut model = TfIdf {
            idf,
            unseen_idf: (1.0 + n).ln() + 1.0,
            vectors: Vec::new(),
        };
        model.vectors = docs.iter().map(|d| model.vectorize(d)).collect();
        model
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn idf(&self, term: &str) -> f64 {
        self.idf.get(term).copied().unwrap_or(self.unseen_idf)
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.idf.contains_key(term)
    }

    pub fn idf_table(&self) -> &HashMap<String, f64> {
        &self.idf
    }

    pub fn vector(&self, doc: usize) -> &SparseVec {
        &self.vectors[doc]
    }

    pub fn vectorize<S: AsRef<str>>(&self, terms: &[S]) -> SparseVec {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in terms {
            *tf.entry(t.as_ref().to_lowercase()).or_default() += 1.0;
        }
        let mut v: SparseVec = tf
            .into_iter()
            .map(|(t, c)| {
                let w = c * self.idf(&t);
                (t, w)
            })
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }

    /// Cosine similarity of every document against `query`, in document order.
    pub fn scores<S: AsRef<str>>(&self, query: &[S]) -> Vec<f64> {
        let q = self.vectorize(query);
        self.vectors.iter().map(|d| cosine(&q, d)).collect()
    }
}

/// Dot product of two unit vectors, clamped into [0, 1].
pub fn cosine(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    dot.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_collection_scores_nothing() {
        let m = TfIdf::fit(Vec::<Vec<String>>::new());
        assert!(m.is_empty());
        assert!(m.scores(&["anything"]).is_empty());
    }

    #[test]
    fn identical_document_scores_one() {
        let m = TfIdf::fit([vec!["a", "b"], vec!["b", "c"]]);
        let s = m.scores(&["b", "a"]);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[1] > 0.0 && s[1] < 1.0);
    }

    #[test]
    fn disjoint_scores_zero() {
        let m = TfIdf::fit([vec!["a"]]);
        assert_eq!(m.scores(&["z"]), vec![0.0]);
    }
}
