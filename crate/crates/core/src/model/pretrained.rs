use std::collections::HashMap;
use std::path::Path;

use super::tensor::Tensor;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Word vectors read from a text file with lines `word f1 f2 ... fd`.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl PretrainedEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 1,
            message,
        })
    }

    pub fn parse(content: &str) -> std::result::Result<Self, (usize, String)> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (n, line) in content.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v = parts
                .map(|x| x.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| (n + 1, e.to_string()))?;
            if v.is_empty() {
                return Err((n + 1, format!("no vector for {word:?}")));
            }
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => return Err((n + 1, format!("expected {d} values, found {}", v.len()))),
                _ => {}
            }
            vectors.insert(word.to_lowercase(), v);
        }
        let dim = dim.ok_or((0, "empty embedding file".to_string()))?;
        Ok(PretrainedEmbeddings { dim, vectors })
    }

    /// Source-vocabulary-aligned table; missing words get zero vectors.
    pub fn table(&self, vocab: &Vocabulary) -> Tensor {
        let mut t = Tensor::zeros(vocab.source_len(), self.dim);
        for (i, w) in vocab.source.iter().enumerate() {
            if let Some(v) = self.vectors.get(w) {
                t.row_mut(i).copy_from_slice(v);
            }
        }
        t
    }
}
