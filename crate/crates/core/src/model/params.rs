use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Layer sizes of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    /// Width of the fixed pretrained source embedding (0 when absent).
    pub pretrained: usize,
}

impl Dims {
    pub fn encoder_input(&self) -> usize {
        self.embed + self.pretrained
    }
}

/// All trainable tensors plus the optional frozen pretrained source embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub dims: Dims,
    pub src_embed: Tensor,
    pub tgt_embed: Tensor,
    pub enc_fwd_w: Tensor,
    pub enc_fwd_b: Tensor,
    pub enc_bwd_w: Tensor,
    pub enc_bwd_b: Tensor,
    pub init_h_w: Tensor,
    pub init_h_b: Tensor,
    pub init_c_w: Tensor,
    pub init_c_b: Tensor,
    pub dec_w: Tensor,
    pub dec_b: Tensor,
    /// Bilinear attention matrix F.
    pub attn: Tensor,
    pub combine_w: Tensor,
    pub combine_b: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
    pub pretrained: Option<Tensor>,
}

pub const TENSOR_NAMES: [&str; 17] = [
    "src_embed",
    "tgt_embed",
    "enc_fwd_w",
    "enc_fwd_b",
    "enc_bwd_w",
    "enc_bwd_b",
    "init_h_w",
    "init_h_b",
    "init_c_w",
    "init_c_b",
    "dec_w",
    "dec_b",
    "attn",
    "combine_w",
    "combine_b",
    "out_w",
    "out_b",
];

impl ModelParameters {
    /// Expected `(rows, cols)` of every trainable tensor, in `TENSOR_NAMES` order.
    pub fn shapes(d: &Dims) -> [(usize, usize); 17] {
        let (e, h, ein) = (d.embed, d.hidden, d.encoder_input());
        [
            (d.source_vocab, e),
            (d.target_vocab, e),
            (4 * h, ein + h),
            (4 * h, 1),
            (4 * h, ein + h),
            (4 * h, 1),
            (h, 2 * h),
            (h, 1),
            (h, 2 * h),
            (h, 1),
            (4 * h, e + 2 * h + h),
            (4 * h, 1),
            (h, 2 * h),
            (h, 3 * h),
            (h, 1),
            (d.target_vocab, h),
            (d.target_vocab, 1),
        ]
    }

    fn build(dims: Dims, mut make: impl FnMut(usize, usize) -> Tensor) -> ModelParameters {
        let s = Self::shapes(&dims);
        let mut t = s.iter().map(|&(r, c)| make(r, c));
        let mut next = || t.next().unwrap();
        ModelParameters {
            dims,
            src_embed: next(),
            tgt_embed: next(),
            enc_fwd_w: next(),
            enc_fwd_b: next(),
            enc_bwd_w: next(),
            enc_bwd_b: next(),
            init_h_w: next(),
            init_h_b: next(),
            init_c_w: next(),
            init_c_b: next(),
            dec_w: next(),
            dec_b: next(),
            attn: next(),
            combine_w: next(),
            combine_b: next(),
            out_w: next(),
            out_b: next(),
            pretrained: None,
        }
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn init(dims: Dims, scale: f64, seed: u64) -> ModelParameters {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(dims, |r, c| Tensor::uniform(r, c, scale, &mut rng))
    }

    pub fn zeros(dims: Dims) -> ModelParameters {
        Self::build(dims, Tensor::zeros)
    }

    /// Zero tensors of the same shapes; the pretrained table is not copied.
    pub fn zeros_like(&self) -> ModelParameters {
        Self::zeros(self.dims)
    }

    pub fn tensors(&self) -> [&Tensor; 17] {
        [
            &self.src_embed,
            &self.tgt_embed,
            &self.enc_fwd_w,
            &self.enc_fwd_b,
            &self.enc_bwd_w,
            &self.enc_bwd_b,
            &self.init_h_w,
            &self.init_h_b,
            &self.init_c_w,
            &self.init_c_b,
            &self.dec_w,
            &self.dec_b,
            &self.attn,
            &self.combine_w,
            &self.combine_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 17] {
        [
            &mut self.src_embed,
            &mut self.tgt_embed,
            &mut self.enc_fwd_w,
            &mut self.enc_fwd_b,
            &mut self.enc_bwd_w,
            &mut self.enc_bwd_b,
            &mut self.init_h_w,
            &mut self.init_h_b,
            &mut self.init_c_w,
            &mut self.init_c_b,
            &mut self.dec_w,
            &mut self.dec_b,
            &mut self.attn,
            &mut self.combine_w,
            &mut self.combine_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= k);
        }
    }

    /// self += other
    pub fn add(&mut self, other: &ModelParameters) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors().iter().map(|t| t.norm_sq()).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            source_vocab: 7,
            target_vocab: 5,
            embed: 3,
            hidden: 4,
            pretrained: 2,
        }
    }

    #[test]
    fn shapes_match_construction() {
        let p = ModelParameters::init(dims(), 0.08, 1);
        for (t, (r, c)) in p.tensors().iter().zip(ModelParameters::shapes(&dims())) {
            assert_eq!((t.rows, t.cols), (r, c));
        }
        assert_eq!(p.enc_fwd_w.cols, 5 + 4);
        assert_eq!(p.dec_w.cols, 3 + 8 + 4);
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let p = ModelParameters::init(dims(), 0.08, 1);
        assert!(p.tensors().iter().all(|t| t.data.iter().all(|x| x.abs() <= 0.08)));
        assert_eq!(p, ModelParameters::init(dims(), 0.08, 1));
        assert_ne!(p, ModelParameters::init(dims(), 0.08, 2));
    }
}
