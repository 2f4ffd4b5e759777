use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::tfidf::{cosine, TfIdf};

/// Returns the SQL of the most TF-IDF-similar training utterance.
#[derive(Debug, Clone)]
pub struct NearestNeighbor {
    tfidf: TfIdf,
    sql: Vec<String>,
}

impl NearestNeighbor {
    pub fn fit(training: &[Example]) -> Result<NearestNeighbor> {
        if training.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(NearestNeighbor {
            tfidf: TfIdf::fit(training.iter().map(|e| e.utterance.as_slice())),
            sql: training.iter().map(|e| e.sql.clone()).collect(),
        })
    }

    /// Index of the best neighbor and its similarity; ties go to the earliest example.
    pub fn neighbor<S: AsRef<str>>(&self, utterance: &[S]) -> (usize, f64) {
        let q = self.tfidf.vectorize(utterance);
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..self.sql.len() {
            let s = cosine(&q, self.tfidf.vector(i));
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    }

    pub fn predict<S: AsRef<str>>(&self, utterance: &[S]) -> &str {
        &self.sql[self.neighbor(utterance).0]
    }
}

pub fn nearest_neighbor_predict<S: AsRef<str>>(training: &[Example], utterance: &[S]) -> Result<String> {
    Ok(NearestNeighbor::fit(training)?.predict(utterance).to_string())
}
