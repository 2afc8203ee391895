//! Small shared pieces for the value-path MLP forwards.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;

pub(super) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let scale = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    Tensor::from_vec(&[fan_in, fan_out], data)
        .expect("matching element count")
        .with_grad()
}

pub(super) fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| x.max(0.0))
}

pub(super) fn mat2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.data().view().into_dimensionality().expect("2-d weight")
}

pub(super) fn row(t: &Tensor) -> ArrayView2<'_, f64> {
    t.data()
        .view()
        .into_shape_with_order((1, t.data().len()))
        .expect("bias row")
}
