//! Dense row-major f64 tensors.
//!
//! The value carrier for observations, hidden states and parameters. Shape
//! handling is deliberately minimal: vectors and matrices cover everything
//! the models need.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid("tensor dimensions must be >= 1"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "vector must be non-empty");
        Tensor { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor { shape: other.shape.clone(), data: vec![0.0; other.data.len()] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single element of a scalar tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    /// Matrix rows for a rank-2 tensor.
    pub fn rows(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "rows() on non-matrix");
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.shape.len(), 2, "cols() on non-matrix");
        self.shape[1]
    }

    // ---- elementwise arithmetic (allocating) ----

    pub fn add(&self, other: &Tensor) -> Tensor {
        debug_assert!(self.same_shape(other));
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        debug_assert!(self.same_shape(other));
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        debug_assert!(self.same_shape(other));
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| x * c)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// self += c * other, shapes must match.
    pub fn axpy(&mut self, c: f64, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        dot_slices(&self.data, &other.data)
    }

    pub fn norm_l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// y = W x for W: [m, n], x: [n].
    pub fn matvec(&self, x: &Tensor) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        debug_assert_eq!(x.numel(), n, "matvec dimension mismatch");
        let mut out = vec![0.0; m];
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot_slices(&self.data[i * n..(i + 1) * n], &x.data);
        }
        Tensor { shape: vec![m], data: out }
    }

    /// y = Wᵀ x for W: [m, n], x: [m].
    pub fn matvec_t(&self, x: &Tensor) -> Tensor {
        let (m, n) = (self.rows(), self.cols());
        debug_assert_eq!(x.numel(), m);
        let mut out = vec![0.0; n];
        for i in 0..m {
            let row = &self.data[i * n..(i + 1) * n];
            let xi = x.data[i];
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += xi * w;
            }
        }
        Tensor { shape: vec![n], data: out }
    }

    /// Rank-1 outer product a bᵀ → [len(a), len(b)].
    pub fn outer(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, n) = (a.numel(), b.numel());
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            let ai = a.data[i];
            for j in 0..n {
                data[i * n + j] = ai * b.data[j];
            }
        }
        Tensor { shape: vec![m, n], data }
    }
}

/// Dot product with four independent accumulators; the serial-accumulator
/// form stalls on the FP add latency chain.
fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in (4 * chunks)..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_invariant_enforced() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn matvec_matches_hand_computation() {
        let w = Tensor::matrix(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let x = Tensor::vector(vec![1.5, -2.0]);
        let y = w.matvec(&x);
        assert_eq!(y.data(), &[3.0, -6.0]);
    }

    #[test]
    fn matvec_t_is_transpose_action() {
        let w = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let x = Tensor::vector(vec![1.0, -1.0]);
        let y = w.matvec_t(&x);
        assert_eq!(y.data(), &[-3.0, -3.0, -3.0]);
    }

    #[test]
    fn outer_shapes_and_values() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0, 5.0]);
        let o = Tensor::outer(&a, &b);
        assert_eq!(o.shape(), &[2, 3]);
        assert_eq!(o.data(), &[3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    }
}
