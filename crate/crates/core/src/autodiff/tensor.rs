//! Dense tensor values with an explicit trainability flag.

use ndarray::{ArrayD, IxDyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("value count {got} does not match shape {shape:?} ({want} elements)")]
    CountMismatch {
        shape: Vec<usize>,
        want: usize,
        got: usize,
    },
    #[error("non-finite value in tensor data")]
    NonFinite,
}

/// Checks a slice-less array for NaN/Inf.
///
/// A single sequential sum is non-finite iff any element is: once an Inf
/// enters the accumulator it can only stay Inf or turn into NaN, and NaN
/// is absorbing.
pub(crate) fn all_finite(data: &ArrayD<f64>) -> bool {
    data.sum().is_finite()
}

/// An n-dimensional `f64` array plus a flag marking it as trainable.
///
/// Invariant: every element is finite. Constructors enforce this and the
/// tape re-checks each operation result, so NaN/Inf surface as errors at
/// the step that produced them.
#[derive(Debug, Clone)]
pub struct Tensor {
    data: ArrayD<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], values: Vec<f64>) -> Result<Self, TensorError> {
        let want: usize = shape.iter().product();
        if values.len() != want {
            return Err(TensorError::CountMismatch {
                shape: shape.to_vec(),
                want,
                got: values.len(),
            });
        }
        let data = ArrayD::from_shape_vec(IxDyn(shape), values).expect("count checked above");
        Self::from_array(data)
    }

    pub fn from_array(data: ArrayD<f64>) -> Result<Self, TensorError> {
        if !all_finite(&data) {
            return Err(TensorError::NonFinite);
        }
        Ok(Self {
            data,
            requires_grad: false,
        })
    }

    pub fn scalar(v: f64) -> Result<Self, TensorError> {
        Self::from_vec(&[], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: ArrayD::zeros(IxDyn(shape)),
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn data(&self) -> &ArrayD<f64> {
        &self.data
    }

    /// Replaces the stored values, keeping the trainability flag.
    pub fn set_data(&mut self, data: ArrayD<f64>) -> Result<(), TensorError> {
        if !all_finite(&data) {
            return Err(TensorError::NonFinite);
        }
        self.data = data;
        Ok(())
    }
}
