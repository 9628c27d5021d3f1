//! Dense n-dimensional array with row-major storage.

use super::scalar::Scalar;

/// N-dimensional numeric array; the universal value of the engine.
///
/// Invariants: `data.len() == shape.iter().product()` and every dimension
/// is at least 1. Scalars are represented as shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Self {
        assert!(!shape.is_empty(), "tensor shape must have at least one dim");
        assert!(shape.iter().all(|&d| d >= 1), "tensor dims must be >= 1, got {shape:?}");
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "element count {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![F::zero(); numel])
    }

    pub fn full(shape: Vec<usize>, value: F) -> Self {
        let numel: usize = shape.iter().product();
        Tensor::new(shape, vec![value; numel])
    }

    pub fn scalar(value: F) -> Self {
        Tensor::new(vec![1], vec![value])
    }

    pub fn from_f64_slice(shape: Vec<usize>, data: &[f64]) -> Self {
        Tensor::new(shape, data.iter().map(|&x| F::from_f64(x)).collect())
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// True when the tensor holds exactly one element.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> F {
        assert!(self.is_scalar(), "scalar_value on shape {:?}", self.shape);
        self.data[0]
    }

    /// Reinterpret under a new shape with the same element count.
    pub fn reshaped(mut self, shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(numel, self.data.len(), "reshape {:?} -> {:?}", self.shape, shape);
        self.shape = shape;
        self
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }

    /// Cast to a different element precision (via f64).
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor::new(
            self.shape.clone(),
            self.data.iter().map(|&x| G::from_f64(x.to_f64())).collect(),
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Index of the first non-finite element, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite())
    }
}

/// Row-major offset helpers for 4-d [batch, channel, height, width] access.
#[inline]
pub fn idx4(c_len: usize, h_len: usize, w_len: usize, b: usize, c: usize, h: usize, w: usize) -> usize {
    ((b * c_len + c) * h_len + h) * w_len + w
}
