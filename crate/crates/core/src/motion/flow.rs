//! Scene-flow field: nearby-frame displacements predicted directly from
//! position and time.

use nalgebra::Vector3;
use ndarray::{Array2, ArrayD, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::encoding::{encode_time, TIME_ENCODING_DIM};
use super::nn::{glorot, mat2, relu, row};
use super::MotionError;
use crate::autodiff::{Tape, TapeError, Tensor, Var};

pub const HIDDEN: usize = 64;
const IN_DIM: usize = 3 + TIME_ENCODING_DIM;
/// Forward then backward displacement, three components each.
const OUT_DIM: usize = 6;

/// MLP from (position, time encoding) to the displacements of a point
/// to the next and previous frame. The zero-initialized head makes a
/// fresh field predict no motion.
#[derive(Debug, Clone)]
pub struct SceneFlowField {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl SceneFlowField {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SceneFlowField {
            w1: glorot(&mut rng, IN_DIM, HIDDEN),
            b1: Tensor::zeros(&[HIDDEN]).with_grad(),
            w2: glorot(&mut rng, HIDDEN, HIDDEN),
            b2: Tensor::zeros(&[HIDDEN]).with_grad(),
            w3: Tensor::zeros(&[HIDDEN, OUT_DIM]).with_grad(),
            b3: Tensor::zeros(&[OUT_DIM]).with_grad(),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.params()
            .into_iter()
            .zip(["w1", "b1", "w2", "b2", "w3", "b3"])
            .map(|(t, n)| (format!("flow.{n}"), t))
            .collect()
    }

    pub fn load_named(&mut self, entries: &[(String, ArrayD<f64>)]) -> Result<(), MotionError> {
        let names: Vec<String> = self.named_params().iter().map(|(n, _)| n.clone()).collect();
        for (name, param) in names.iter().zip(self.params_mut()) {
            let found = entries
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| MotionError::Mismatch(format!("missing tensor {name}")))?;
            if found.1.shape() != param.shape() {
                return Err(MotionError::Mismatch(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    found.1.shape(),
                    param.shape()
                )));
            }
            param
                .set_data(found.1.clone())
                .map_err(|e| MotionError::Mismatch(format!("tensor {name}: {e}")))?;
        }
        Ok(())
    }

    /// (forward, backward) displacement columns for a batch of points.
    pub fn query_batch(&self, pts: &Array2<f64>, t: f64) -> Array2<f64> {
        let input = flow_input(pts, t);
        let h1 = relu(&(input.dot(&mat2(&self.w1)) + row(&self.b1)));
        let h2 = relu(&(h1.dot(&mat2(&self.w2)) + row(&self.b2)));
        h2.dot(&mat2(&self.w3)) + row(&self.b3)
    }

    /// Displacements of one point to the adjacent frames.
    pub fn query(&self, x: &nalgebra::Point3<f64>, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let pts = Array2::from_shape_vec((1, 3), vec![x.x, x.y, x.z]).expect("1x3");
        let out = self.query_batch(&pts, t);
        (
            Vector3::new(out[[0, 0]], out[[0, 1]], out[[0, 2]]),
            Vector3::new(out[[0, 3]], out[[0, 4]], out[[0, 5]]),
        )
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p)).collect()
    }

    /// Tape forward pass: (B, 3) points to (B, 6) displacements.
    pub fn query_tape(
        &self,
        tape: &mut Tape,
        pts: Var,
        t: f64,
        vars: &[Var],
    ) -> Result<Var, TapeError> {
        let batch = tape.value(pts).shape()[0];
        let enc = encode_time(t);
        let enc_rows = Array2::from_shape_fn((batch, TIME_ENCODING_DIM), |(_, j)| enc[j]);
        let enc_var = tape.constant(enc_rows.into_dyn())?;
        let input = tape.concat_cols(&[pts, enc_var])?;
        let h1 = tape.matmul(input, vars[0])?;
        let h1 = tape.add_row(h1, vars[1])?;
        let h1 = tape.relu(h1)?;
        let h2 = tape.matmul(h1, vars[2])?;
        let h2 = tape.add_row(h2, vars[3])?;
        let h2 = tape.relu(h2)?;
        let out = tape.matmul(h2, vars[4])?;
        tape.add_row(out, vars[5])
    }
}

fn flow_input(pts: &Array2<f64>, t: f64) -> Array2<f64> {
    let enc = encode_time(t);
    let mut input = Array2::zeros((pts.nrows(), IN_DIM));
    for (i, p) in pts.axis_iter(Axis(0)).enumerate() {
        for k in 0..3 {
            input[[i, k]] = p[k];
        }
        for (j, &e) in enc.iter().enumerate() {
            input[[i, 3 + j]] = e;
        }
    }
    input
}

