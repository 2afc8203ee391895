use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayD, ArrayView2, IxDyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::*;

fn scalar_param(v: f64) -> Tensor {
    Tensor::scalar(v).unwrap().with_grad()
}

fn rand_param(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, values).unwrap().with_grad()
}

#[test]
fn forward_product_and_unary_values() {
    let mut tape = Tape::new();
    let x = tape.leaf(&scalar_param(2.0));
    let y = tape.leaf(&scalar_param(3.0));
    let xy = tape.mul(x, y).unwrap();
    assert_eq!(tape.scalar_value(xy).unwrap(), 6.0);

    let zero = tape.constant_scalar(0.0).unwrap();
    let e = tape.exp(zero).unwrap();
    assert_eq!(tape.scalar_value(e).unwrap(), 1.0);

    let v = tape
        .constant(ArrayD::from_shape_vec(IxDyn(&[2]), vec![3.0, 4.0]).unwrap())
        .unwrap();
    let n = tape.norm(v).unwrap();
    assert!((tape.scalar_value(n).unwrap() - 5.0).abs() < 1e-12);
}

#[test]
fn backward_product_exp_norm() {
    let mut tape = Tape::new();
    let x = tape.leaf(&scalar_param(2.0));
    let y = tape.leaf(&scalar_param(3.0));
    let xy = tape.mul(x, y).unwrap();
    let g = tape.backward(xy).unwrap();
    assert_eq!(g.grad(x).sum(), 3.0);
    assert_eq!(g.grad(y).sum(), 2.0);

    let mut tape = Tape::new();
    let x = tape.leaf(&scalar_param(0.0));
    let e = tape.exp(x).unwrap();
    let g = tape.backward(e).unwrap();
    assert_eq!(g.grad(x).sum(), 1.0);

    let mut tape = Tape::new();
    let v = tape.leaf(&Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap().with_grad());
    let n = tape.norm(v).unwrap();
    let g = tape.backward(n).unwrap();
    let gv = g.grad(v);
    assert!((gv[[0]] - 0.6).abs() < 1e-12);
    assert!((gv[[1]] - 0.8).abs() < 1e-12);
}

#[test]
fn unused_parameter_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(&scalar_param(2.0));
    let unused = tape.leaf(&rand_param(&[3, 2], &mut ChaCha8Rng::seed_from_u64(0)));
    let y = tape.mul_scalar(x, 4.0).unwrap();
    let g = tape.backward(y).unwrap();
    assert!(g.try_grad(unused).is_none());
    assert_eq!(g.grad(unused).shape(), &[3, 2]);
    assert_eq!(g.grad(unused).sum(), 0.0);
}

#[test]
fn gradient_accumulates_over_reuse() {
    let mut tape = Tape::new();
    let x = tape.leaf(&scalar_param(1.5));
    let y = tape.add(x, x).unwrap();
    let z = tape.mul(y, x).unwrap(); // z = 2x^2, dz/dx = 4x = 6
    let g = tape.backward(z).unwrap();
    assert!((g.grad(x).sum() - 6.0).abs() < 1e-12);
}

#[test]
fn backward_is_linear_over_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = rand_param(&[4], &mut rng);

    let build = |tape: &mut Tape, v: Var, which: usize| -> Var {
        match which {
            0 => {
                let s = tape.sin(v).unwrap();
                tape.sum(s).unwrap()
            }
            _ => {
                let e = tape.exp(v).unwrap();
                tape.mean(e).unwrap()
            }
        }
    };

    let mut tape = Tape::new();
    let v = tape.leaf(&p);
    let l0 = build(&mut tape, v, 0);
    let l1 = build(&mut tape, v, 1);
    let total = tape.add(l0, l1).unwrap();
    let g_total = tape.backward(total).unwrap().grad(v);
    let g0 = tape.backward(l0).unwrap().grad(v);
    let g1 = tape.backward(l1).unwrap().grad(v);
    let diff = (&g_total - &(&g0 + &g1)).mapv(f64::abs).sum();
    assert!(diff < 1e-14, "sum rule violated by {diff}");
}

#[test]
fn identical_builds_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = rand_param(&[3, 4], &mut rng);
        let b = rand_param(&[4, 2], &mut rng);
        let mut tape = Tape::new();
        let av = tape.leaf(&a);
        let bv = tape.leaf(&b);
        let mm = tape.matmul(av, bv).unwrap();
        let s = tape.sin(mm).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        (
            tape.scalar_value(l).unwrap(),
            g.grad(av).into_raw_vec_and_offset().0,
        )
    };
    let (l1, g1) = run();
    let (l2, g2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(g1.len(), g2.len());
    for (a, b) in g1.iter().zip(&g2) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn shape_and_seed_errors() {
    let mut tape = Tape::new();
    let a = tape.constant(ArrayD::zeros(IxDyn(&[2, 3]))).unwrap();
    let b = tape.constant(ArrayD::zeros(IxDyn(&[3, 2]))).unwrap();
    assert!(matches!(tape.add(a, b), Err(TapeError::Shape { .. })));
    assert!(matches!(tape.matmul(a, a), Err(TapeError::Shape { .. })));
    assert!(matches!(tape.backward(a), Err(TapeError::SeedNotScalar)));
}

#[test]
fn non_finite_is_an_error_not_a_value() {
    let mut tape = Tape::new();
    let big = tape.constant_scalar(1e308).unwrap();
    let bigger = tape.exp(big);
    assert!(matches!(bigger, Err(TapeError::NonFinite { .. })));

    let a = tape.constant_scalar(1.0).unwrap();
    let zero = tape.constant_scalar(0.0).unwrap();
    assert!(matches!(tape.div(a, zero), Err(TapeError::NonFinite { .. })));
}

/// Finite-difference sweep for a graph builder over one parameter tensor.
fn fd_check(
    shape: &[usize],
    seed: u64,
    offset: f64,
    build: impl Fn(&mut Tape, Var) -> Var,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = rand_param(shape, &mut rng);
    if offset != 0.0 {
        let data = p.data().mapv(|x| x + offset * x.signum() + if x == 0.0 { offset } else { 0.0 });
        p.set_data(data).unwrap();
    }
    let params = vec![p];
    let mut lg = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let v = tape.leaf(&ps[0]);
        let out = build(&mut tape, v);
        let g = tape.backward(out).unwrap();
        (tape.scalar_value(out).unwrap(), vec![g.grad(v)])
    };
    let mut l = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let v = tape.leaf(&ps[0]);
        let out = build(&mut tape, v);
        tape.scalar_value(out).unwrap()
    };
    let report = check_gradients(&params, &mut lg, &mut l, 8, 1e-4, 1e-8, &mut rng);
    assert!(
        report.passes(1e-3),
        "finite differences disagree: {report:?}"
    );
}

#[test]
fn primitives_match_finite_differences() {
    // Elementwise chains ending in a scalar reduction.
    fd_check(&[3, 4], 1, 0.0, |t, v| {
        let s = t.sin(v).unwrap();
        let c = t.cos(v).unwrap();
        let m = t.mul(s, c).unwrap();
        t.sum(m).unwrap()
    });
    fd_check(&[6], 2, 0.0, |t, v| {
        let e = t.exp(v).unwrap();
        let half = t.mul_scalar(v, 0.5).unwrap();
        let a = t.add(e, half).unwrap();
        let a = t.add_scalar(a, 0.25).unwrap();
        t.mean(a).unwrap()
    });
    // Division away from zero denominators.
    fd_check(&[5], 3, 0.5, |t, v| {
        let num = t.sin(v).unwrap();
        let q = t.div(num, v).unwrap();
        t.sum(q).unwrap()
    });
    // Rectifier and absolute value, shifted off their kinks.
    fd_check(&[8], 4, 0.3, |t, v| {
        let r = t.relu(v).unwrap();
        let a = t.abs(v).unwrap();
        let s = t.add(r, a).unwrap();
        t.sum(s).unwrap()
    });
    fd_check(&[4], 5, 0.0, |t, v| {
        let n = t.neg(v).unwrap();
        let d = t.sub(v, n).unwrap();
        t.norm(d).unwrap()
    });
    // Reductions along the last axis.
    fd_check(&[3, 5], 6, 0.0, |t, v| {
        let n = t.norm_last(v).unwrap();
        let s = t.sum_last(v).unwrap();
        let both = t.mul(n, s).unwrap();
        t.sum(both).unwrap()
    });
    fd_check(&[7], 7, 0.0, |t, v| {
        let c = t.cumsum_exclusive(v).unwrap();
        let m = t.mul(c, v).unwrap();
        t.sum(m).unwrap()
    });
    // Structural ops: concat, slice, reshape, bias row, column scale.
    fd_check(&[4, 3], 8, 0.0, |t, v| {
        let left = t.slice_cols(v, 0..2).unwrap();
        let right = t.slice_cols(v, 2..3).unwrap();
        let glued = t.concat_cols(&[right, left]).unwrap();
        let flat = t.reshape(glued, &[12]).unwrap();
        t.norm(flat).unwrap()
    });
    fd_check(&[3], 9, 0.0, |t, v| {
        let m = t
            .constant(ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![0.3, -0.6, 0.2, 0.9, 0.1, -0.4]).unwrap())
            .unwrap();
        let biased = t.add_row(m, v).unwrap();
        let e = t.exp(biased).unwrap();
        t.sum(e).unwrap()
    });
    fd_check(&[4], 10, 0.0, |t, v| {
        let m = t
            .constant(ArrayD::from_shape_vec(IxDyn(&[4, 2]), vec![0.5; 8]).unwrap())
            .unwrap();
        let scaled = t.mul_column(m, v).unwrap();
        t.sum(scaled).unwrap()
    });
}

#[test]
fn matmul_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = rand_param(&[3, 4], &mut rng);
    let b = rand_param(&[4, 2], &mut rng);
    let params = vec![a, b];
    let build = |tape: &mut Tape, av: Var, bv: Var| {
        let mm = tape.matmul(av, bv).unwrap();
        let s = tape.sin(mm).unwrap();
        tape.sum(s).unwrap()
    };
    let mut lg = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let av = tape.leaf(&ps[0]);
        let bv = tape.leaf(&ps[1]);
        let out = build(&mut tape, av, bv);
        let g = tape.backward(out).unwrap();
        (
            tape.scalar_value(out).unwrap(),
            vec![g.grad(av), g.grad(bv)],
        )
    };
    let mut l = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let av = tape.leaf(&ps[0]);
        let bv = tape.leaf(&ps[1]);
        let out = build(&mut tape, av, bv);
        tape.scalar_value(out).unwrap()
    };
    let report = check_gradients(&params, &mut lg, &mut l, 10, 1e-4, 1e-8, &mut rng);
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn bilinear_sampling_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let map = Arc::new(Array3::from_shape_fn((6, 7, 2), |_| rng.gen_range(-1.0..1.0)));
    // Interior coordinates, clear of the clamped border and of the
    // integer grid lines where bilinear interpolation kinks.
    let coords: Vec<f64> = (0..5)
        .flat_map(|_| {
            [
                rng.gen_range(0.3..5.0) + 0.37,
                rng.gen_range(0.3..4.0) + 0.21,
            ]
        })
        .collect();
    let p = Tensor::from_vec(&[5, 2], coords).unwrap().with_grad();
    let params = vec![p];
    let map2 = Arc::clone(&map);
    let mut lg = move |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let c = tape.leaf(&ps[0]);
        let s = tape.sample_bilinear(Arc::clone(&map2), c).unwrap();
        let out = tape.norm(s).unwrap();
        let g = tape.backward(out).unwrap();
        (tape.scalar_value(out).unwrap(), vec![g.grad(c)])
    };
    let map3 = Arc::clone(&map);
    let mut l = move |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let c = tape.leaf(&ps[0]);
        let s = tape.sample_bilinear(Arc::clone(&map3), c).unwrap();
        let out = tape.norm(s).unwrap();
        tape.scalar_value(out).unwrap()
    };
    let report = check_gradients(&params, &mut lg, &mut l, 10, 1e-4, 1e-8, &mut rng);
    assert!(report.passes(1e-3), "{report:?}");
}

struct QuadraticProbe;

impl DiffProbe for QuadraticProbe {
    fn dim_out(&self) -> usize {
        2
    }
    fn eval(&self, positions: ArrayView2<f64>) -> (Array2<f64>, Array3<f64>) {
        let b = positions.nrows();
        let mut val = Array2::zeros((b, 2));
        let mut jac = Array3::zeros((b, 2, 3));
        for (i, p) in positions.outer_iter().enumerate() {
            let (x, y, z) = (p[0], p[1], p[2]);
            val[(i, 0)] = x * x + y * z;
            val[(i, 1)] = (x + 2.0 * y - z).sin();
            jac[(i, 0, 0)] = 2.0 * x;
            jac[(i, 0, 1)] = z;
            jac[(i, 0, 2)] = y;
            let c = (x + 2.0 * y - z).cos();
            jac[(i, 1, 0)] = c;
            jac[(i, 1, 1)] = 2.0 * c;
            jac[(i, 1, 2)] = -c;
        }
        (val, jac)
    }
}

#[test]
fn probe_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = rand_param(&[4, 3], &mut rng);
    let params = vec![p];
    let mut lg = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let v = tape.leaf(&ps[0]);
        let q = tape.probe(&QuadraticProbe, v).unwrap();
        let out = tape.sum(q).unwrap();
        let g = tape.backward(out).unwrap();
        (tape.scalar_value(out).unwrap(), vec![g.grad(v)])
    };
    let mut l = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let v = tape.leaf(&ps[0]);
        let q = tape.probe(&QuadraticProbe, v).unwrap();
        let out = tape.sum(q).unwrap();
        tape.scalar_value(out).unwrap()
    };
    let report = check_gradients(&params, &mut lg, &mut l, 12, 1e-4, 1e-8, &mut rng);
    assert!(report.passes(1e-3), "{report:?}");
}

#[test]
fn adam_zero_gradient_leaves_fresh_parameters_unchanged() {
    let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap().with_grad();
    let before = p.data().clone();
    let mut adam = AdamState::new(0.1, &[&p]);
    let grads = vec![ArrayD::zeros(IxDyn(&[3]))];
    adam.step(&mut [&mut p], &grads).unwrap();
    assert_eq!(p.data(), &before);
}

#[test]
fn adam_first_step_magnitude_and_descent() {
    let mut p = scalar_param(1.0);
    let mut adam = AdamState::new(0.1, &[&p]);
    let grads = vec![ArrayD::from_elem(IxDyn(&[]), 1.0)];
    adam.step(&mut [&mut p], &grads).unwrap();
    let after_one = p.data().sum();
    // Bias correction makes the first step lr * g / (|g| + eps) ~ lr.
    assert!((after_one - 0.9).abs() < 1e-6, "got {after_one}");
    adam.step(&mut [&mut p], &grads).unwrap();
    let after_two = p.data().sum();
    assert!(after_two < after_one);
}

#[test]
fn adam_rejects_mismatched_shapes() {
    let mut p = scalar_param(1.0);
    let mut adam = AdamState::new(0.1, &[&p]);
    let grads = vec![ArrayD::zeros(IxDyn(&[2]))];
    assert!(adam.step(&mut [&mut p], &grads).is_err());
}
