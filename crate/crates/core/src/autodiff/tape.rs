//! Eager operation tape with reverse-order gradient accumulation.

use std::ops::Range;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, Axis, Ix1, Ix2, IxDyn};
use thiserror::Error;

use super::tensor::{all_finite, Tensor};

/// Guard added under the square root of Euclidean norms so the gradient
/// x / ||x|| stays defined (and zero) at the origin. Small enough to be
/// invisible at the tolerances used anywhere in the pipeline.
const NORM_EPS: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum TapeError {
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward seed must be a scalar (zero-dim) variable")]
    SeedNotScalar,
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

/// Handle to a node on a [`Tape`]. Only valid for the tape that made it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Differentiable black-box query: values plus an analytic (or otherwise
/// supplied) Jacobian with respect to the 3-D input positions.
///
/// Used to splice field lookups into the tape: the tape differentiates
/// through the returned Jacobian, so the probe's own gradient quality is
/// the caller's contract.
pub trait DiffProbe: Send + Sync {
    /// Number of output channels per position.
    fn dim_out(&self) -> usize;
    /// `positions` is (B, 3); returns values (B, K) and Jacobian (B, K, 3).
    fn eval(&self, positions: ArrayView2<f64>) -> (Array2<f64>, Array3<f64>);
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    /// (B, C) + (C,) with the row vector broadcast over rows.
    AddRow(Var, Var),
    /// (B, C) * (B,) with the column vector broadcast over columns.
    MulColumn(Var, Var),
    Neg(Var),
    Abs(Var),
    Exp(Var),
    Sin(Var),
    Cos(Var),
    Relu(Var),
    Matmul(Var, Var),
    Sum(Var),
    Mean(Var),
    /// Reduce the last axis by summation: (.., C) -> (..).
    SumLast(Var),
    /// Euclidean norm of the last axis: (.., C) -> (..).
    NormLast(Var),
    /// Euclidean norm of the whole tensor -> scalar.
    Norm(Var),
    /// Exclusive running sum over a 1-D tensor.
    CumsumExclusive(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, Range<usize>),
    Reshape(Var),
    /// Bilinear lookup of a constant (H, W, C) map at (B, 2) pixel coords.
    Bilinear { map: Arc<Array3<f64>>, coords: Var },
    /// Black-box query of a field at (B, 3) positions; Jacobian captured
    /// at forward time.
    Probe { positions: Var, jac: Array3<f64> },
}

struct Node {
    value: ArrayD<f64>,
    needs_grad: bool,
    op: Op,
}

/// Gradients keyed by [`Var`], produced by [`Tape::backward`].
pub struct Gradients {
    slots: Vec<Option<ArrayD<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the seed with respect to `v`; zeros when `v` does not
    /// lie on any path to the seed.
    pub fn grad(&self, v: Var) -> ArrayD<f64> {
        match &self.slots[v.0] {
            Some(g) => g.clone(),
            None => ArrayD::zeros(IxDyn(&self.shapes[v.0])),
        }
    }

    /// Borrowing variant of [`Gradients::grad`]; `None` means zero.
    pub fn try_grad(&self, v: Var) -> Option<&ArrayD<f64>> {
        self.slots[v.0].as_ref()
    }
}

/// Records operations as they evaluate. Insertion order is a topological
/// order, so the backward pass is a single reverse sweep that visits each
/// node exactly once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor as a leaf; its trainability flag decides whether
    /// gradients flow to it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_unchecked(t.data().clone(), t.requires_grad(), Op::Leaf)
    }

    /// Registers constant data (no gradient).
    pub fn constant(&mut self, data: ArrayD<f64>) -> Result<Var, TapeError> {
        if !all_finite(&data) {
            return Err(TapeError::NonFinite { op: "constant" });
        }
        Ok(self.push_unchecked(data, false, Op::Leaf))
    }

    pub fn constant_scalar(&mut self, v: f64) -> Result<Var, TapeError> {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn value(&self, v: Var) -> &ArrayD<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a zero-dim (scalar) variable.
    pub fn scalar_value(&self, v: Var) -> Result<f64, TapeError> {
        let val = self.value(v);
        if val.ndim() != 0 {
            return Err(TapeError::Invalid {
                op: "scalar_value",
                detail: format!("variable has shape {:?}", val.shape()),
            });
        }
        Ok(val.sum())
    }

    fn push_unchecked(&mut self, value: ArrayD<f64>, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: ArrayD<f64>, needs_grad: bool, op: Op) -> Result<Var, TapeError> {
        if !all_finite(&value) {
            return Err(TapeError::NonFinite { op: name });
        }
        Ok(self.push_unchecked(value, needs_grad, op))
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn same_shape(&self, name: &'static str, a: Var, b: Var) -> Result<(), TapeError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TapeError::Shape {
                op: name,
                detail: format!(
                    "{:?} vs {:?}",
                    self.value(a).shape(),
                    self.value(b).shape()
                ),
            });
        }
        Ok(())
    }

    fn view2(&self, name: &'static str, v: Var) -> Result<ArrayView2<'_, f64>, TapeError> {
        self.value(v)
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| TapeError::Shape {
                op: name,
                detail: format!("expected 2-D, got {:?}", self.value(v).shape()),
            })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("add", a, b)?;
        let value = self.value(a) + self.value(b);
        self.push("add", value, self.needs(a) || self.needs(b), Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("sub", a, b)?;
        let value = self.value(a) - self.value(b);
        self.push("sub", value, self.needs(a) || self.needs(b), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("mul", a, b)?;
        let value = self.value(a) * self.value(b);
        self.push("mul", value, self.needs(a) || self.needs(b), Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        self.same_shape("div", a, b)?;
        let value = self.value(a) / self.value(b);
        self.push("div", value, self.needs(a) || self.needs(b), Op::Div(a, b))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, TapeError> {
        let value = self.value(a) + c;
        self.push("add_scalar", value, self.needs(a), Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Result<Var, TapeError> {
        let value = self.value(a) * c;
        self.push("mul_scalar", value, self.needs(a), Op::MulScalar(a, c))
    }

    /// (B, C) + (C,), the bias pattern. Backward sums the row axis.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, TapeError> {
        let mv = self.view2("add_row", m)?;
        let rv = self
            .value(row)
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|_| TapeError::Shape {
                op: "add_row",
                detail: format!("row must be 1-D, got {:?}", self.value(row).shape()),
            })?;
        if mv.ncols() != rv.len() {
            return Err(TapeError::Shape {
                op: "add_row",
                detail: format!("{} cols vs row of {}", mv.ncols(), rv.len()),
            });
        }
        let value = (&mv + &rv).into_dyn();
        self.push(
            "add_row",
            value,
            self.needs(m) || self.needs(row),
            Op::AddRow(m, row),
        )
    }

    /// (B, C) * (B,), scaling each row by its own factor.
    pub fn mul_column(&mut self, m: Var, col: Var) -> Result<Var, TapeError> {
        let mv = self.view2("mul_column", m)?;
        let cv = self
            .value(col)
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|_| TapeError::Shape {
                op: "mul_column",
                detail: format!("column must be 1-D, got {:?}", self.value(col).shape()),
            })?;
        if mv.nrows() != cv.len() {
            return Err(TapeError::Shape {
                op: "mul_column",
                detail: format!("{} rows vs column of {}", mv.nrows(), cv.len()),
            });
        }
        let value = (&mv * &cv.insert_axis(Axis(1))).into_dyn();
        self.push(
            "mul_column",
            value,
            self.needs(m) || self.needs(col),
            Op::MulColumn(m, col),
        )
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(|x| -x);
        self.push("neg", value, self.needs(a), Op::Neg(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(f64::abs);
        self.push("abs", value, self.needs(a), Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(f64::exp);
        self.push("exp", value, self.needs(a), Op::Exp(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(f64::sin);
        self.push("sin", value, self.needs(a), Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(f64::cos);
        self.push("cos", value, self.needs(a), Op::Cos(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = self.value(a).mapv(|x| x.max(0.0));
        self.push("relu", value, self.needs(a), Op::Relu(a))
    }

    /// Strict 2-D matrix product (M, K) x (K, N).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TapeError> {
        let av = self.view2("matmul", a)?;
        let bv = self.view2("matmul", b)?;
        if av.ncols() != bv.nrows() {
            return Err(TapeError::Shape {
                op: "matmul",
                detail: format!("({},{}) x ({},{})", av.nrows(), av.ncols(), bv.nrows(), bv.ncols()),
            });
        }
        let value = av.dot(&bv).into_dyn();
        self.push(
            "matmul",
            value,
            self.needs(a) || self.needs(b),
            Op::Matmul(a, b),
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, TapeError> {
        let value = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum());
        self.push("sum", value, self.needs(a), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, TapeError> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(TapeError::Invalid {
                op: "mean",
                detail: "empty tensor".into(),
            });
        }
        let value = ArrayD::from_elem(IxDyn(&[]), self.value(a).sum() / n as f64);
        self.push("mean", value, self.needs(a), Op::Mean(a))
    }

    pub fn sum_last(&mut self, a: Var) -> Result<Var, TapeError> {
        let nd = self.value(a).ndim();
        if nd == 0 {
            return Err(TapeError::Shape {
                op: "sum_last",
                detail: "zero-dim input".into(),
            });
        }
        let value = self.value(a).sum_axis(Axis(nd - 1));
        self.push("sum_last", value, self.needs(a), Op::SumLast(a))
    }

    /// Euclidean norm along the last axis, guarded so the gradient is the
    /// unit direction everywhere and zero at the origin.
    pub fn norm_last(&mut self, a: Var) -> Result<Var, TapeError> {
        let nd = self.value(a).ndim();
        if nd == 0 {
            return Err(TapeError::Shape {
                op: "norm_last",
                detail: "zero-dim input".into(),
            });
        }
        let sq = self.value(a).mapv(|x| x * x).sum_axis(Axis(nd - 1));
        let value = sq.mapv(|s| (s + NORM_EPS).sqrt());
        self.push("norm_last", value, self.needs(a), Op::NormLast(a))
    }

    /// Euclidean norm of the whole tensor.
    pub fn norm(&mut self, a: Var) -> Result<Var, TapeError> {
        let s: f64 = self.value(a).iter().map(|x| x * x).sum();
        let value = ArrayD::from_elem(IxDyn(&[]), (s + NORM_EPS).sqrt());
        self.push("norm", value, self.needs(a), Op::Norm(a))
    }

    /// out[i] = sum of in[..i] over a 1-D tensor.
    pub fn cumsum_exclusive(&mut self, a: Var) -> Result<Var, TapeError> {
        let av = self
            .value(a)
            .view()
            .into_dimensionality::<Ix1>()
            .map_err(|_| TapeError::Shape {
                op: "cumsum_exclusive",
                detail: format!("expected 1-D, got {:?}", self.value(a).shape()),
            })?;
        let mut out = Array1::zeros(av.len());
        let mut acc = 0.0;
        for (i, x) in av.iter().enumerate() {
            out[i] = acc;
            acc += x;
        }
        self.push(
            "cumsum_exclusive",
            out.into_dyn(),
            self.needs(a),
            Op::CumsumExclusive(a),
        )
    }

    /// Concatenates 2-D blocks along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TapeError> {
        if parts.is_empty() {
            return Err(TapeError::Invalid {
                op: "concat_cols",
                detail: "no inputs".into(),
            });
        }
        let rows = self.view2("concat_cols", parts[0])?.nrows();
        let mut cols = 0;
        for &p in parts {
            let v = self.view2("concat_cols", p)?;
            if v.nrows() != rows {
                return Err(TapeError::Shape {
                    op: "concat_cols",
                    detail: format!("{} rows vs {}", v.nrows(), rows),
                });
            }
            cols += v.ncols();
        }
        let mut out = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let v = self.view2("concat_cols", p)?;
            out.slice_mut(ndarray::s![.., at..at + v.ncols()]).assign(&v);
            at += v.ncols();
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(
            "concat_cols",
            out.into_dyn(),
            needs,
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Column range of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, range: Range<usize>) -> Result<Var, TapeError> {
        let v = self.view2("slice_cols", a)?;
        if range.end > v.ncols() || range.start > range.end {
            return Err(TapeError::Invalid {
                op: "slice_cols",
                detail: format!("range {:?} of {} cols", range, v.ncols()),
            });
        }
        let value = v.slice(ndarray::s![.., range.clone()]).to_owned().into_dyn();
        self.push(
            "slice_cols",
            value,
            self.needs(a),
            Op::SliceCols(a, range),
        )
    }

    /// Same data, new shape (element count preserved).
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TapeError> {
        let want: usize = shape.iter().product();
        if want != self.value(a).len() {
            return Err(TapeError::Shape {
                op: "reshape",
                detail: format!("{} elements into {:?}", self.value(a).len(), shape),
            });
        }
        let value = self
            .value(a)
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("count checked above");
        self.push("reshape", value, self.needs(a), Op::Reshape(a))
    }

    /// Bilinear lookup of `map` (H, W, C) at pixel coordinates (B, 2)
    /// given as (x, y) with integer values at pixel centers. Coordinates
    /// are clamped to the valid rectangle; the gradient of a clamped
    /// coordinate is zero.
    pub fn sample_bilinear(&mut self, map: Arc<Array3<f64>>, coords: Var) -> Result<Var, TapeError> {
        let cv = self.view2("sample_bilinear", coords)?;
        if cv.ncols() != 2 {
            return Err(TapeError::Shape {
                op: "sample_bilinear",
                detail: format!("coords must be (B, 2), got (B, {})", cv.ncols()),
            });
        }
        let (h, w, ch) = map.dim();
        if h < 2 || w < 2 {
            return Err(TapeError::Invalid {
                op: "sample_bilinear",
                detail: "map must be at least 2x2".into(),
            });
        }
        let mut out = Array2::zeros((cv.nrows(), ch));
        for (b, row) in cv.outer_iter().enumerate() {
            let (ix, fx, _) = clamp_cell(row[0], w);
            let (iy, fy, _) = clamp_cell(row[1], h);
            for c in 0..ch {
                let v00 = map[(iy, ix, c)];
                let v01 = map[(iy, ix + 1, c)];
                let v10 = map[(iy + 1, ix, c)];
                let v11 = map[(iy + 1, ix + 1, c)];
                out[(b, c)] = v00 * (1.0 - fx) * (1.0 - fy)
                    + v01 * fx * (1.0 - fy)
                    + v10 * (1.0 - fx) * fy
                    + v11 * fx * fy;
            }
        }
        self.push(
            "sample_bilinear",
            out.into_dyn(),
            self.needs(coords),
            Op::Bilinear { map, coords },
        )
    }

    /// Splices a black-box differentiable query into the graph. The
    /// probe's Jacobian is captured now and reused by the backward pass.
    pub fn probe(&mut self, probe: &dyn DiffProbe, positions: Var) -> Result<Var, TapeError> {
        let pv = self.view2("probe", positions)?;
        if pv.ncols() != 3 {
            return Err(TapeError::Shape {
                op: "probe",
                detail: format!("positions must be (B, 3), got (B, {})", pv.ncols()),
            });
        }
        let (value, jac) = probe.eval(pv);
        if value.nrows() != pv.nrows() || value.ncols() != probe.dim_out() {
            return Err(TapeError::Invalid {
                op: "probe",
                detail: "probe returned wrong value shape".into(),
            });
        }
        if jac.dim() != (pv.nrows(), probe.dim_out(), 3) {
            return Err(TapeError::Invalid {
                op: "probe",
                detail: "probe returned wrong Jacobian shape".into(),
            });
        }
        if !jac.sum().is_finite() {
            return Err(TapeError::NonFinite { op: "probe" });
        }
        self.push(
            "probe",
            value.into_dyn(),
            self.needs(positions),
            Op::Probe { positions, jac },
        )
    }

    /// Reverse sweep from a scalar seed. Each node is visited once, in
    /// reverse insertion order; gradients accumulate by addition.
    pub fn backward(&self, seed: Var) -> Result<Gradients, TapeError> {
        if self.value(seed).ndim() != 0 {
            return Err(TapeError::SeedNotScalar);
        }
        let mut slots: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        slots[seed.0] = Some(ArrayD::from_elem(IxDyn(&[]), 1.0));
        for i in (0..=seed.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = slots[i].take() else { continue };
            self.push_back(i, &g, &mut slots);
            slots[i] = Some(g);
        }
        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            slots,
        })
    }

    fn push_back(&self, i: usize, g: &ArrayD<f64>, slots: &mut [Option<ArrayD<f64>>]) {
        let acc = |slots: &mut [Option<ArrayD<f64>>], v: Var, add: ArrayD<f64>| {
            if !self.needs(v) {
                return;
            }
            match &mut slots[v.0] {
                Some(slot) => *slot += &add,
                slot @ None => *slot = Some(add),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.mapv(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(slots, *a, g * self.value(*b));
                acc(slots, *b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                acc(slots, *a, g / bv);
                let av = self.value(*a);
                acc(slots, *b, -(g * av) / (bv * bv));
            }
            Op::AddScalar(a) => acc(slots, *a, g.clone()),
            Op::MulScalar(a, c) => acc(slots, *a, g * *c),
            Op::AddRow(m, row) => {
                acc(slots, *m, g.clone());
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                acc(slots, *row, g2.sum_axis(Axis(0)).into_dyn());
            }
            Op::MulColumn(m, col) => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let cv = self
                    .value(*col)
                    .view()
                    .into_dimensionality::<Ix1>()
                    .expect("forward checked");
                acc(slots, *m, (&g2 * &cv.insert_axis(Axis(1))).into_dyn());
                let mv = self
                    .value(*m)
                    .view()
                    .into_dimensionality::<Ix2>()
                    .expect("forward checked");
                acc(slots, *col, (&g2 * &mv).sum_axis(Axis(1)).into_dyn());
            }
            Op::Neg(a) => acc(slots, *a, g.mapv(|x| -x)),
            Op::Abs(a) => {
                let sign = self.value(*a).mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                acc(slots, *a, g * &sign);
            }
            Op::Exp(a) => acc(slots, *a, g * &self.nodes[i].value),
            Op::Sin(a) => acc(slots, *a, g * &self.value(*a).mapv(f64::cos)),
            Op::Cos(a) => acc(slots, *a, g * &self.value(*a).mapv(|x| -x.sin())),
            Op::Relu(a) => {
                let mask = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                acc(slots, *a, g * &mask);
            }
            Op::Matmul(a, b) => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let av = self
                    .value(*a)
                    .view()
                    .into_dimensionality::<Ix2>()
                    .expect("forward checked");
                let bv = self
                    .value(*b)
                    .view()
                    .into_dimensionality::<Ix2>()
                    .expect("forward checked");
                acc(slots, *a, g2.dot(&bv.t()).into_dyn());
                acc(slots, *b, av.t().dot(&g2).into_dyn());
            }
            Op::Sum(a) => {
                let s = g.sum();
                acc(slots, *a, ArrayD::from_elem(self.value(*a).raw_dim(), s));
            }
            Op::Mean(a) => {
                let s = g.sum() / self.value(*a).len() as f64;
                acc(slots, *a, ArrayD::from_elem(self.value(*a).raw_dim(), s));
            }
            Op::SumLast(a) => {
                let last = self.value(*a).ndim() - 1;
                let cols = self.value(*a).shape()[last];
                let mut gin = ArrayD::zeros(self.value(*a).raw_dim());
                for (mut lane, gv) in gin.rows_mut().into_iter().zip(g.iter()) {
                    lane.fill(*gv);
                    debug_assert_eq!(lane.len(), cols);
                }
                acc(slots, *a, gin);
            }
            Op::NormLast(a) => {
                let out = &self.nodes[i].value;
                let mut gin = self.value(*a).clone();
                for ((mut lane, gv), ov) in
                    gin.rows_mut().into_iter().zip(g.iter()).zip(out.iter())
                {
                    let scale = gv / ov;
                    lane.mapv_inplace(|x| x * scale);
                }
                acc(slots, *a, gin);
            }
            Op::Norm(a) => {
                let out = self.nodes[i].value.sum();
                let scale = g.sum() / out;
                acc(slots, *a, self.value(*a) * scale);
            }
            Op::CumsumExclusive(a) => {
                let gv = g.view().into_dimensionality::<Ix1>().expect("forward checked");
                let n = gv.len();
                let mut gin = Array1::zeros(n);
                let mut acc_tail = 0.0;
                for i in (0..n).rev() {
                    gin[i] = acc_tail;
                    acc_tail += gv[i];
                }
                acc(slots, *a, gin.into_dyn());
            }
            Op::ConcatCols(parts) => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let mut at = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    let part = g2.slice(ndarray::s![.., at..at + w]).to_owned();
                    acc(slots, p, part.into_dyn());
                    at += w;
                }
            }
            Op::SliceCols(a, range) => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let av = self.value(*a);
                let mut gin = Array2::zeros((av.shape()[0], av.shape()[1]));
                gin.slice_mut(ndarray::s![.., range.clone()]).assign(&g2);
                acc(slots, *a, gin.into_dyn());
            }
            Op::Reshape(a) => {
                let gin = g
                    .clone()
                    .into_shape_with_order(self.value(*a).raw_dim())
                    .expect("forward checked");
                acc(slots, *a, gin);
            }
            Op::Bilinear { map, coords } => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let cv = self
                    .value(*coords)
                    .view()
                    .into_dimensionality::<Ix2>()
                    .expect("forward checked");
                let (h, w, ch) = map.dim();
                let mut gin = Array2::zeros((cv.nrows(), 2));
                for (b, row) in cv.outer_iter().enumerate() {
                    let (ix, fx, in_x) = clamp_cell(row[0], w);
                    let (iy, fy, in_y) = clamp_cell(row[1], h);
                    let mut gx = 0.0;
                    let mut gy = 0.0;
                    for c in 0..ch {
                        let v00 = map[(iy, ix, c)];
                        let v01 = map[(iy, ix + 1, c)];
                        let v10 = map[(iy + 1, ix, c)];
                        let v11 = map[(iy + 1, ix + 1, c)];
                        let dx = (v01 - v00) * (1.0 - fy) + (v11 - v10) * fy;
                        let dy = (v10 - v00) * (1.0 - fx) + (v11 - v01) * fx;
                        gx += g2[(b, c)] * dx;
                        gy += g2[(b, c)] * dy;
                    }
                    gin[(b, 0)] = if in_x { gx } else { 0.0 };
                    gin[(b, 1)] = if in_y { gy } else { 0.0 };
                }
                acc(slots, *coords, gin.into_dyn());
            }
            Op::Probe { positions, jac } => {
                let g2 = g.view().into_dimensionality::<Ix2>().expect("forward checked");
                let (b_n, k_n, _) = jac.dim();
                let mut gin = Array2::zeros((b_n, 3));
                for b in 0..b_n {
                    for k in 0..k_n {
                        let gv = g2[(b, k)];
                        if gv == 0.0 {
                            continue;
                        }
                        for d in 0..3 {
                            gin[(b, d)] += gv * jac[(b, k, d)];
                        }
                    }
                }
                acc(slots, *positions, gin.into_dyn());
            }
        }
    }
}

/// Clamps a continuous coordinate to the interpolable range of a map with
/// `n` samples; returns (cell index, fraction, was-interior).
fn clamp_cell(x: f64, n: usize) -> (usize, f64, bool) {
    let max = (n - 1) as f64;
    let interior = x > 0.0 && x < max;
    let xc = x.clamp(0.0, max - 1e-9);
    let ix = (xc.floor() as usize).min(n - 2);
    (ix, xc - ix as f64, interior)
}
