use rand::Rng;

/// Dense row-major matrix of f64; vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn zeros_like(&self) -> Tensor {
        Tensor::zeros(self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// out = W x + b
    pub fn affine(&self, x: &[f64], bias: &Tensor) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(bias.data.len(), self.rows);
        let mut out = bias.data.clone();
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
        out
    }

    /// out = W x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|r| dot(self.row(r), x)).collect()
    }

    /// out += Wᵀ y
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, self.row(r), out);
            }
        }
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.matvec_t_acc(y, &mut out);
        out
    }

    /// self += y xᵀ
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr != 0.0 {
                axpy(yr, x, self.row_mut(r));
            }
        }
    }

    /// Adds `v` into this (column) vector.
    pub fn add_vec(&mut self, v: &[f64]) {
        debug_assert_eq!(v.len(), self.data.len());
        axpy(1.0, v, &mut self.data);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += a x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

pub fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    out.extend_from_slice(a);
    out.extend_from_slice(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_handles_large_inputs() {
        let p = softmax(&[1000.0, 1000.0]);
        assert_eq!(p, vec![0.5, 0.5]);
        let p = softmax(&[2f64.ln(), 0.0]);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn transpose_products_agree() {
        let w = Tensor {
            rows: 2,
            cols: 3,
            data: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        };
        assert_eq!(w.matvec(&[1.0, 0.0, -1.0]), vec![-2.0, -2.0]);
        assert_eq!(w.matvec_t(&[1.0, 1.0]), vec![5.0, 7.0, 9.0]);
        let mut g = w.zeros_like();
        g.outer_acc(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(g.data, vec![1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
    }
}
