//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "NLDBCKPT"
//! version  u32 LE
//! header   u64 LE length, then JSON {vocab, config, dims, pretrained}
//! tensors  for each tensor: u64 rows, u64 cols, rows*cols f64 LE
//! ```
//!
//! Trainable tensors come in [`TENSOR_NAMES`](super::params::TENSOR_NAMES)
//! order, followed by the pretrained table when the header says it exists.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Dims, ModelParameters};
use super::tensor::Tensor;
use super::train::TrainConfig;
use super::vocab::Vocabulary;
use super::Seq2Seq;
use crate::error::{Error, Result};
use crate::fsutil;

const MAGIC: &[u8; 8] = b"NLDBCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    vocab: Vocabulary,
    config: TrainConfig,
    dims: Dims,
    pretrained: bool,
}

pub fn to_bytes(model: &Seq2Seq) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        vocab: model.vocab.clone(),
        config: model.config.clone(),
        dims: model.params.dims,
        pretrained: model.params.pretrained.is_some(),
    })?;
    let mut out = Vec::with_capacity(header.len() + 8 * model.params.num_parameters() + 64);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let mut write = |t: &Tensor| {
        out.extend_from_slice(&(t.rows as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols as u64).to_le_bytes());
        for x in &t.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    model.params.tensors().into_iter().for_each(&mut write);
    if let Some(pre) = &model.params.pretrained {
        write(pre);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self, expect: (usize, usize)) -> Result<Tensor> {
        let rows = self.u64()? as usize;
        let cols = self.u64()? as usize;
        if (rows, cols) != expect {
            return Err(Error::Checkpoint(format!(
                "tensor shape {rows}x{cols}, expected {}x{}",
                expect.0, expect.1
            )));
        }
        let raw = self.take(rows * cols * 8)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor { rows, cols, data })
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Seq2Seq> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(len)?)?;
    let vocab = header.vocab.reindexed();
    let dims = header.dims;
    if dims.source_vocab != vocab.source_len() || dims.target_vocab != vocab.target_len() {
        return Err(Error::Checkpoint("vocabulary does not match tensor shapes".into()));
    }
    let mut params = ModelParameters::zeros(dims);
    for (slot, shape) in params.tensors_mut().into_iter().zip(ModelParameters::shapes(&dims)) {
        *slot = r.tensor(shape)?;
    }
    if header.pretrained {
        params.pretrained = Some(r.tensor((dims.source_vocab, dims.pretrained))?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok(Seq2Seq {
        vocab,
        config: header.config,
        params,
    })
}

pub fn save(model: &Seq2Seq, path: impl AsRef<Path>) -> Result<()> {
    fsutil::write_atomic(path, &to_bytes(model)?)
}

pub fn load(path: impl AsRef<Path>) -> Result<Seq2Seq> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
