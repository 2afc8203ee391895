//! Coupling-based invertible warp between an observed time and the
//! canonical frame.
//!
//! Each block rescales and shifts one coordinate axis conditioned on the
//! other two axes and the time encoding: y_k = x_k * exp(s) + b. The
//! inverse runs the blocks backwards with x_k = (y_k - b) * exp(-s),
//! which is algebraically exact, so round trips cost only rounding
//! error no matter what the parameters are. A zero-initialized final
//! subnet layer makes the fresh network the identity map.

use ndarray::{Array2, ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encoding::{encode_time, TIME_ENCODING_DIM};
use super::nn::{glorot, mat2, relu, row};
use super::MotionError;
use crate::autodiff::{Tape, TapeError, Tensor, Var};

pub const BLOCKS: usize = 6;
pub const HIDDEN: usize = 64;
/// Two pass-through coordinates plus the time encoding.
const SUBNET_IN: usize = 2 + TIME_ENCODING_DIM;

/// One axis-transforming block: a two-hidden-layer ReLU subnet mapping
/// (pass-through coords, time encoding) to (log-scale, shift).
#[derive(Debug, Clone)]
pub struct CouplingBlock {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl CouplingBlock {
    fn init(rng: &mut ChaCha8Rng) -> Self {
        CouplingBlock {
            w1: glorot(rng, SUBNET_IN, HIDDEN),
            b1: Tensor::zeros(&[HIDDEN]).with_grad(),
            w2: glorot(rng, HIDDEN, HIDDEN),
            b2: Tensor::zeros(&[HIDDEN]).with_grad(),
            // Zero final layer: s = b = 0, so the block starts as the
            // identity.
            w3: Tensor::zeros(&[HIDDEN, 2]).with_grad(),
            b3: Tensor::zeros(&[2]).with_grad(),
        }
    }

    /// (s, b) columns for a batch of pass-through features.
    fn subnet(&self, input: &Array2<f64>) -> Array2<f64> {
        let h1 = relu(&(input.dot(&mat2(&self.w1)) + row(&self.b1)));
        let h2 = relu(&(h1.dot(&mat2(&self.w2)) + row(&self.b2)));
        h2.dot(&mat2(&self.w3)) + row(&self.b3)
    }
}

#[derive(Debug, Clone)]
pub struct InvertibleMotionNet {
    pub blocks: Vec<CouplingBlock>,
}

impl InvertibleMotionNet {
    /// Fresh network computing the identity warp at every time.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        InvertibleMotionNet {
            blocks: (0..BLOCKS).map(|_| CouplingBlock::init(&mut rng)).collect(),
        }
    }

    /// Adds noise to every parameter, including the zero-initialized
    /// layers; used by tests that need a non-trivial warp.
    pub fn perturb(&mut self, scale: f64, rng: &mut ChaCha8Rng) {
        for t in self.params_mut() {
            let noisy = t.data().mapv(|x| x + (rng.gen::<f64>() * 2.0 - 1.0) * scale);
            t.set_data(noisy).expect("bounded noise stays finite");
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.blocks
            .iter()
            .flat_map(|b| [&b.w1, &b.b1, &b.w2, &b.b2, &b.w3, &b.b3])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.blocks
            .iter_mut()
            .flat_map(|b| [&mut b.w1, &mut b.b1, &mut b.w2, &mut b.b2, &mut b.w3, &mut b.b3])
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                [
                    (format!("motion.block{i}.w1"), &b.w1),
                    (format!("motion.block{i}.b1"), &b.b1),
                    (format!("motion.block{i}.w2"), &b.w2),
                    (format!("motion.block{i}.b2"), &b.b2),
                    (format!("motion.block{i}.w3"), &b.w3),
                    (format!("motion.block{i}.b3"), &b.b3),
                ]
            })
            .collect()
    }

    /// Restores parameters from named arrays, requiring exact names and
    /// shapes.
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

    /// Observed space at time t to canonical space, batched over rows.
    pub fn to_canonical(&self, pts: &Array2<f64>, t: f64) -> Array2<f64> {
        let enc = encode_time(t);
        let mut x = pts.clone();
        for (i, block) in self.blocks.iter().enumerate() {
            let axis = i % 3;
            let sb = block.subnet(&coupling_input(&x, axis, &enc));
            for (mut p, sb) in x.axis_iter_mut(Axis(0)).zip(sb.axis_iter(Axis(0))) {
                p[axis] = p[axis] * sb[0].exp() + sb[1];
            }
        }
        x
    }

    /// Canonical space back to observed space at time t; exact inverse
    /// of [`Self::to_canonical`].
    pub fn from_canonical(&self, pts: &Array2<f64>, t: f64) -> Array2<f64> {
        let enc = encode_time(t);
        let mut x = pts.clone();
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let axis = i % 3;
            let sb = block.subnet(&coupling_input(&x, axis, &enc));
            for (mut p, sb) in x.axis_iter_mut(Axis(0)).zip(sb.axis_iter(Axis(0))) {
                p[axis] = (p[axis] - sb[1]) * (-sb[0]).exp();
            }
        }
        x
    }

    /// Carries points from time t0 to time t1 through canonical space.
    pub fn warp(&self, pts: &Array2<f64>, t0: f64, t1: f64) -> Array2<f64> {
        self.from_canonical(&self.to_canonical(pts, t0), t1)
    }

    /// Registers every parameter as a tape leaf, in [`Self::params`]
    /// order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.params().into_iter().map(|p| tape.leaf(p)).collect()
    }

    /// Tape version of [`Self::to_canonical`] over registered parameters.
    pub fn to_canonical_tape(
        &self,
        tape: &mut Tape,
        pts: Var,
        t: f64,
        vars: &[Var],
    ) -> Result<Var, TapeError> {
        self.run_tape(tape, pts, t, vars, false)
    }

    /// Tape version of [`Self::from_canonical`].
    pub fn from_canonical_tape(
        &self,
        tape: &mut Tape,
        pts: Var,
        t: f64,
        vars: &[Var],
    ) -> Result<Var, TapeError> {
        self.run_tape(tape, pts, t, vars, true)
    }

    /// Tape version of [`Self::warp`].
    pub fn warp_tape(
        &self,
        tape: &mut Tape,
        pts: Var,
        t0: f64,
        t1: f64,
        vars: &[Var],
    ) -> Result<Var, TapeError> {
        let canonical = self.to_canonical_tape(tape, pts, t0, vars)?;
        self.from_canonical_tape(tape, canonical, t1, vars)
    }

    fn run_tape(
        &self,
        tape: &mut Tape,
        pts: Var,
        t: f64,
        vars: &[Var],
        inverse: bool,
    ) -> Result<Var, TapeError> {
        let batch = tape.value(pts).shape()[0];
        let enc = encode_time(t);
        let enc_rows = Array2::from_shape_fn((batch, TIME_ENCODING_DIM), |(_, j)| enc[j]);
        let enc_var = tape.constant(enc_rows.into_dyn())?;
        let mut x = pts;
        let order: Vec<usize> = if inverse {
            (0..self.blocks.len()).rev().collect()
        } else {
            (0..self.blocks.len()).collect()
        };
        for i in order {
            let axis = i % 3;
            let v = &vars[6 * i..6 * i + 6];
            // Pass-through columns in ascending order, then the encoding.
            let mut parts = Vec::new();
            for k in 0..3 {
                if k != axis {
                    parts.push(tape.slice_cols(x, k..k + 1)?);
                }
            }
            parts.push(enc_var);
            let input = tape.concat_cols(&parts)?;
            let h1 = tape.matmul(input, v[0])?;
            let h1 = tape.add_row(h1, v[1])?;
            let h1 = tape.relu(h1)?;
            let h2 = tape.matmul(h1, v[2])?;
            let h2 = tape.add_row(h2, v[3])?;
            let h2 = tape.relu(h2)?;
            let sb = tape.matmul(h2, v[4])?;
            let sb = tape.add_row(sb, v[5])?;
            let s = tape.slice_cols(sb, 0..1)?;
            let b = tape.slice_cols(sb, 1..2)?;
            let xa = tape.slice_cols(x, axis..axis + 1)?;
            let ya = if inverse {
                let centered = tape.sub(xa, b)?;
                let neg_s = tape.neg(s)?;
                let scale = tape.exp(neg_s)?;
                tape.mul(centered, scale)?
            } else {
                let scale = tape.exp(s)?;
                let scaled = tape.mul(xa, scale)?;
                tape.add(scaled, b)?
            };
            let mut cols = Vec::new();
            for k in 0..3 {
                if k == axis {
                    cols.push(ya);
                } else {
                    cols.push(tape.slice_cols(x, k..k + 1)?);
                }
            }
            x = tape.concat_cols(&cols)?;
        }
        Ok(x)
    }
}

/// Pass-through coordinates plus time encoding, row per point.
fn coupling_input(x: &Array2<f64>, axis: usize, enc: &[f64]) -> Array2<f64> {
    let n = x.nrows();
    let mut input = Array2::zeros((n, SUBNET_IN));
    for (i, p) in x.axis_iter(Axis(0)).enumerate() {
        let mut j = 0;
        for k in 0..3 {
            if k != axis {
                input[[i, j]] = p[k];
                j += 1;
            }
        }
        for (j2, &e) in enc.iter().enumerate() {
            input[[i, 2 + j2]] = e;
        }
    }
    input
}
