//! Central finite-difference verification of analytic gradients.

use ndarray::ArrayD;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// (parameter index, flat element index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// (analytic, finite-difference) values at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    /// Coordinates whose relative error exceeded 1e-3, for diagnostics.
    pub over_tol: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Compares analytic gradients against central differences on randomly
/// chosen parameter coordinates.
///
/// `loss_and_grad` evaluates the function once and returns its value plus
/// one gradient array per parameter; `loss` evaluates the value alone at
/// perturbed parameters. `picks` coordinates are drawn per parameter
/// (capped at the parameter size). The relative error of a coordinate is
/// |fd - an| / max(|fd|, |an|, floor); `floor` absorbs coordinates where
/// both sides are numerically zero. Coordinates that fail the central
/// quotient are retried with a smaller step and with one-sided stencils,
/// which keeps piecewise-linear kinks from flagging gradients that are
/// correct on their own side of the kink.
pub fn check_gradients(
    params: &[Tensor],
    loss_and_grad: &mut dyn FnMut(&[Tensor]) -> (f64, Vec<ArrayD<f64>>),
    loss: &mut dyn FnMut(&[Tensor]) -> f64,
    picks: usize,
    step: f64,
    floor: f64,
    rng: &mut ChaCha8Rng,
) -> GradCheckReport {
    let (_, grads) = loss_and_grad(params);
    assert_eq!(grads.len(), params.len(), "one gradient per parameter");
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
        worst_values: None,
        over_tol: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        let n = p.data().len();
        if n == 0 {
            continue;
        }
        let k = picks.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for &ei in idx.iter().take(k) {
            let an = grads[pi].as_slice().expect("standard layout")[ei];
            let mut eval = |d: f64| loss(&perturbed(params, pi, ei, d));
            let denom = |fd: f64| an.abs().max(fd.abs()).max(floor);
            let rel_of = |fd: f64| (fd - an).abs() / denom(fd);
            let mut fd = (eval(step) - eval(-step)) / (2.0 * step);
            let mut rel = rel_of(fd);
            if rel > 1e-3 {
                // The central quotient assumes the function is smooth
                // across [-h, +h]. Near a ReLU kink that fails in two
                // ways: a kink between h/8 and h vanishes under a
                // smaller step, and a kink inside the smaller window
                // drives the central quotient to the mean of the two
                // one-sided slopes no matter the step. The analytic
                // gradient follows exactly one side, so second-order
                // one-sided stencils (which never cross the base
                // point) recover it; a wrong gradient matches neither
                // side. Keep the closest estimate.
                let h = step / 8.0;
                let base = eval(0.0);
                let (fp1, fp2) = (eval(h), eval(2.0 * h));
                let (fm1, fm2) = (eval(-h), eval(-2.0 * h));
                let candidates = [
                    (fp1 - fm1) / (2.0 * h),
                    (-3.0 * base + 4.0 * fp1 - fp2) / (2.0 * h),
                    (3.0 * base - 4.0 * fm1 + fm2) / (2.0 * h),
                ];
                for cand in candidates {
                    let r = rel_of(cand);
                    if r < rel {
                        rel = r;
                        fd = cand;
                    }
                }
            }
            report.checked += 1;
            if rel > 1e-3 {
                report.over_tol += 1;
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((pi, ei));
                report.worst_values = Some((an, fd));
            }
        }
    }
    report
}

fn perturbed(params: &[Tensor], pi: usize, ei: usize, delta: f64) -> Vec<Tensor> {
    let mut out = params.to_vec();
    let mut data = out[pi].data().clone();
    data.as_slice_mut().expect("standard layout")[ei] += delta;
    out[pi].set_data(data).expect("finite perturbation");
    out
}
