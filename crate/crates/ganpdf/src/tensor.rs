//! Dense row-major tensor.
//!
//! Network inputs are either single vectors (rank 1) or batches (rank 2 with
//! shape `[batch, dim]`); the engine treats the last dimension as the feature
//! axis. Values are stored row-major.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, rejecting a shape whose element count disagrees with
    /// the value count.
    pub fn new(shape: Vec<usize>, values: Vec<F>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape(format!(
                "shape {:?} holds {} values, got {}",
                shape,
                expected,
                values.len()
            )));
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![F::zero(); n],
        }
    }

    /// Rank-1 tensor from a vector.
    pub fn vector(values: Vec<F>) -> Self {
        Tensor {
            shape: vec![values.len()],
            values,
        }
    }

    /// Rank-2 tensor with `rows` rows of width `cols`.
    pub fn matrix(rows: usize, cols: usize, values: Vec<F>) -> Result<Self> {
        Self::new(vec![rows, cols], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Size of the last (feature) dimension; 0 for a rank-0 tensor.
    pub fn feature_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(0)
    }

    /// Number of rows when viewed as a batch: the product of all but the
    /// last dimension.
    pub fn batch_len(&self) -> usize {
        if self.shape.is_empty() {
            0
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Row `i` of the batch view.
    pub fn row(&self, i: usize) -> &[F] {
        let d = self.feature_dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        let d = self.feature_dim();
        &mut self.values[i * d..(i + 1) * d]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_shape_value_disagreement() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn batch_view() {
        let t = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(t.batch_len(), 2);
        assert_eq!(t.feature_dim(), 3);
        assert_eq!(t.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn vector_is_rank_one() {
        let t = Tensor::vector(vec![1.5f64, -2.0]);
        assert_eq!(t.rank(), 1);
        assert_eq!(t.batch_len(), 1);
        assert_eq!(t.row(0), &[1.5, -2.0]);
    }

    proptest! {
        #[test]
        fn shape_product_always_equals_len(rows in 1usize..8, cols in 1usize..8) {
            let t = Tensor::<f64>::zeros(vec![rows, cols]);
            prop_assert_eq!(t.len(), rows * cols);
            prop_assert_eq!(t.batch_len() * t.feature_dim(), t.len());
        }
    }
}
