//! Losses that shape the scene-flow field: temporal regularizers, induced
//! optical-flow matching, and warped-render color consistency.

use nalgebra::Point3;
use ndarray::{Array2, Array3, ArrayView2};

use crate::autodiff::{DiffProbe, Tape, Var};
use crate::geometry::Camera;
use crate::motion::SceneFlowField;
use crate::scenefield::DifferentiableField;
use crate::training::{FrameWindow, TrainError};

use super::{mean_of_sums, project_tape};

/// One supervised ray for the motion-matching loss. `point` is the
/// expected surface point along the ray, held fixed for the iteration;
/// the ground-truth displacements come from the flow provider.
#[derive(Debug, Clone)]
pub struct MotionRay {
    pub pixel: [f64; 2],
    pub point: [f64; 3],
    pub gt_next: Option<[f64; 2]>,
    pub gt_prev: Option<[f64; 2]>,
}

/// One ray of cached render state for the dynamic photometric loss. The
/// sample points and spacings were drawn when the frame was rendered and
/// stay fixed; only the flow that advects them is differentiated.
#[derive(Debug, Clone)]
pub struct PhotoRay {
    /// (S, 3) stratified sample points along the ray.
    pub points: Array2<f64>,
    /// Spacing assigned to each sample.
    pub deltas: Vec<f64>,
    /// Observed pixel color at the frame the ray belongs to.
    pub observed: [f64; 3],
}

/// Slowness, temporal smoothness, and round-trip consistency of the flow
/// field at `points`, each mean-reduced over the points. Directions that
/// would leave the sequence are skipped.
pub fn loss_flow_regularizers(
    tape: &mut Tape,
    flow: &SceneFlowField,
    vars: &[Var],
    points: &Array2<f64>,
    win: &FrameWindow,
) -> Result<(Var, Var, Var), TrainError> {
    let n = points.nrows();
    if n == 0 {
        return Err(TrainError::EmptySamples);
    }
    let pts = tape.constant(points.clone().into_dyn())?;
    let out = flow.query_tape(tape, pts, win.t, vars)?;
    let fwd = tape.slice_cols(out, 0..3)?;
    let bwd = tape.slice_cols(out, 3..6)?;

    let mut slow_parts = Vec::new();
    let mut cycle_parts = Vec::new();
    for (present, disp, t_there) in [
        (win.has_next, fwd, win.t + win.dt),
        (win.has_prev, bwd, win.t - win.dt),
    ] {
        if !present {
            continue;
        }
        let mag = tape.abs(disp)?;
        let mag = tape.sum_last(mag)?;
        slow_parts.push(tape.sum(mag)?);

        // Round trip: follow the displacement, then ask the far frame for
        // the way back; the two should cancel.
        let there = tape.add(pts, disp)?;
        let out_there = flow.query_tape(tape, there, t_there, vars)?;
        let back = if t_there > win.t {
            tape.slice_cols(out_there, 3..6)?
        } else {
            tape.slice_cols(out_there, 0..3)?
        };
        let residual = tape.add(disp, back)?;
        let sq = tape.mul(residual, residual)?;
        let sq = tape.sum_last(sq)?;
        cycle_parts.push(tape.sum(sq)?);
    }
    let slow = mean_of_sums(tape, &slow_parts, n)?;
    let cycle = mean_of_sums(tape, &cycle_parts, n)?;

    let smooth = if win.has_prev && win.has_next {
        let s = tape.add(fwd, bwd)?;
        let sq = tape.mul(s, s)?;
        let sq = tape.sum_last(sq)?;
        let total = tape.sum(sq)?;
        mean_of_sums(tape, &[total], n)?
    } else {
        tape.constant_scalar(0.0)?
    };
    Ok((slow, smooth, cycle))
}

/// Pixel-space mismatch between the optical flow induced by the scene
/// flow (advect the ray's surface point, reproject) and the ground-truth
/// flow, summed over available directions and mean-reduced over rays.
pub fn loss_motion_matching(
    tape: &mut Tape,
    flow: &SceneFlowField,
    vars: &[Var],
    camera: &Camera,
    rays: &[MotionRay],
    win: &FrameWindow,
) -> Result<Var, TrainError> {
    let next_idx: Vec<usize> = rays
        .iter()
        .enumerate()
        .filter(|(_, r)| win.has_next && r.gt_next.is_some())
        .map(|(i, _)| i)
        .collect();
    let prev_idx: Vec<usize> = rays
        .iter()
        .enumerate()
        .filter(|(_, r)| win.has_prev && r.gt_prev.is_some())
        .map(|(i, _)| i)
        .collect();
    let contributing = rays
        .iter()
        .filter(|r| {
            (win.has_next && r.gt_next.is_some()) || (win.has_prev && r.gt_prev.is_some())
        })
        .count();
    if contributing == 0 {
        return Err(TrainError::NoValidRays);
    }

    let mut sums = Vec::new();
    let shared = next_idx == prev_idx && !next_idx.is_empty();
    let mut shared_out = None;
    let picks: [(&Vec<usize>, std::ops::Range<usize>, fn(&MotionRay) -> Option<[f64; 2]>); 2] = [
        (&next_idx, 0..3, |r| r.gt_next),
        (&prev_idx, 3..6, |r| r.gt_prev),
    ];
    for (idx, cols, pick) in picks {
        if idx.is_empty() {
            continue;
        }
        let out = match (shared, shared_out) {
            (true, Some(v)) => v,
            _ => {
                let pts = Array2::from_shape_fn((idx.len(), 3), |(i, k)| rays[idx[i]].point[k]);
                let pts = tape.constant(pts.into_dyn())?;
                let out = flow.query_tape(tape, pts, win.t, vars)?;
                if shared {
                    shared_out = Some(out);
                }
                out
            }
        };
        let disp = tape.slice_cols(out, cols)?;
        let pts = Array2::from_shape_fn((idx.len(), 3), |(i, k)| rays[idx[i]].point[k]);
        let pts = tape.constant(pts.into_dyn())?;
        let moved = tape.add(pts, disp)?;
        let (pix, _z) = project_tape(tape, camera, moved)?;
        let base = Array2::from_shape_fn((idx.len(), 2), |(i, k)| rays[idx[i]].pixel[k]);
        let base = tape.constant(base.into_dyn())?;
        let induced = tape.sub(pix, base)?;
        let gt = Array2::from_shape_fn((idx.len(), 2), |(i, k)| {
            pick(&rays[idx[i]]).expect("filtered above")[k]
        });
        let gt = tape.constant(gt.into_dyn())?;
        let diff = tape.sub(induced, gt)?;
        let norms = tape.norm_last(diff)?;
        sums.push(tape.sum(norms)?);
    }
    Ok(mean_of_sums(tape, &sums, contributing)?)
}

/// Color error of re-rendering each ray with its cached sample points
/// advected into the adjacent frame by the flow field, against the color
/// observed at the ray's own frame. Summed over available directions,
/// mean-reduced over rays.
pub fn loss_dynamic_photometric(
    tape: &mut Tape,
    flow: &SceneFlowField,
    vars: &[Var],
    field: &dyn DifferentiableField,
    rays: &[PhotoRay],
    background: [f64; 3],
    win: &FrameWindow,
) -> Result<Var, TrainError> {
    let mut sums = Vec::new();
    for ray in rays {
        let s = ray.points.nrows();
        assert_eq!(ray.deltas.len(), s);
        let pts = tape.constant(ray.points.clone().into_dyn())?;
        let out = flow.query_tape(tape, pts, win.t, vars)?;
        for (present, cols, t_there) in [
            (win.has_next, 0..3, win.t + win.dt),
            (win.has_prev, 3..6, win.t - win.dt),
        ] {
            if !present {
                continue;
            }
            let disp = tape.slice_cols(out, cols)?;
            let advected = tape.add(pts, disp)?;
            let probe = FieldProbe { field, time: t_there };
            let sc = tape.probe(&probe, advected)?;
            let sigma = tape.slice_cols(sc, 0..1)?;
            let sigma = tape.reshape(sigma, &[s])?;
            let deltas = Array2::from_shape_fn((1, s), |(_, i)| ray.deltas[i]);
            let deltas = tape.constant(deltas.into_dyn())?;
            let deltas = tape.reshape(deltas, &[s])?;
            let tau = tape.mul(sigma, deltas)?;
            let acc = tape.cumsum_exclusive(tau)?;
            let neg_acc = tape.neg(acc)?;
            let trans = tape.exp(neg_acc)?;
            let neg_tau = tape.neg(tau)?;
            let pass = tape.exp(neg_tau)?;
            let pass = tape.neg(pass)?;
            let alpha = tape.add_scalar(pass, 1.0)?;
            let w = tape.mul(trans, alpha)?;
            let rgb = tape.slice_cols(sc, 1..4)?;
            let weighted = tape.mul_column(rgb, w)?;
            let ones = tape.constant(Array2::from_elem((1, s), 1.0).into_dyn())?;
            let color = tape.matmul(ones, weighted)?;
            let total_tau = tape.sum(tau)?;
            let total_tau = tape.reshape(total_tau, &[1])?;
            let neg_total = tape.neg(total_tau)?;
            let t_end = tape.exp(neg_total)?;
            let bg = tape.constant(
                Array2::from_shape_fn((1, 3), |(_, k)| background[k]).into_dyn(),
            )?;
            let bg_term = tape.mul_column(bg, t_end)?;
            let color = tape.add(color, bg_term)?;
            let obs = tape.constant(
                Array2::from_shape_fn((1, 3), |(_, k)| ray.observed[k]).into_dyn(),
            )?;
            let diff = tape.sub(color, obs)?;
            let sq = tape.mul(diff, diff)?;
            sums.push(tape.sum(sq)?);
        }
    }
    Ok(mean_of_sums(tape, &sums, rays.len().max(1))?)
}

/// Adapter exposing a differentiable field's density and color as a
/// 4-channel tape probe at a fixed time.
pub(crate) struct FieldProbe<'a> {
    pub field: &'a dyn DifferentiableField,
    pub time: f64,
}

impl DiffProbe for FieldProbe<'_> {
    fn dim_out(&self) -> usize {
        4
    }

    fn eval(&self, positions: ArrayView2<f64>) -> (Array2<f64>, Array3<f64>) {
        let b = positions.nrows();
        let mut value = Array2::zeros((b, 4));
        let mut jac = Array3::zeros((b, 4, 3));
        for (i, row) in positions.outer_iter().enumerate() {
            let p = Point3::new(row[0], row[1], row[2]);
            let (sigma, color, d_sigma, d_color) = self.field.query_with_grad(&p, self.time);
            value[[i, 0]] = sigma;
            for a in 0..3 {
                value[[i, 1 + a]] = color[a];
                jac[[i, 0, a]] = d_sigma[a];
                for k in 0..3 {
                    jac[[i, 1 + k, a]] = d_color[k][a];
                }
            }
        }
        (value, jac)
    }
}
