//! Losses that shape the invertible motion network through the tracked
//! surface: distillation from the flow field, mesh smoothness, descriptor
//! alignment, reprojected-flow agreement, and depth agreement.

use std::sync::Arc;

use ndarray::{Array2, Array3};

use crate::autodiff::{Tape, Var};
use crate::geometry::Camera;
use crate::motion::InvertibleMotionNet;
use crate::scenefield::bilinear1;
use crate::training::{FrameWindow, SurfSampleSet, TrainError};

use super::{guarded_row_cosine, mean_of_sums, project_tape};

/// How descriptor misalignment maps to a loss term, given the occlusion
/// guard `eps`.
///
/// `Floor` is max(1 - cos, eps): the term never drops below `eps`, so
/// well-aligned vertices stop producing gradient. `Cap` is
/// min(1 - cos, eps): gross mismatches (likely occlusions) saturate at
/// `eps` and stop producing gradient instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLossMode {
    Floor,
    Cap,
}

/// Per-vertex supervision for the surface-flow loss: ground-truth pixel
/// displacement at the vertex's frame-time projection, per direction.
#[derive(Debug, Clone)]
pub struct SurfFlowItem {
    pub vertex: usize,
    pub gt_next: Option<[f64; 2]>,
    pub gt_prev: Option<[f64; 2]>,
}

/// Per-vertex target for the depth loss: the field's rendered depth under
/// the vertex's frame-time projection.
#[derive(Debug, Clone)]
pub struct DepthItem {
    pub vertex: usize,
    pub field_depth: f64,
}

/// Mismatch between the displacement the motion network assigns to each
/// sample and the scene-flow field's displacement (`teacher`, an (N, 6)
/// matrix of forward/backward displacements held constant). Summed over
/// available directions, mean-reduced over samples.
pub fn loss_distill(
    tape: &mut Tape,
    net: &InvertibleMotionNet,
    net_vars: &[Var],
    samples: &SurfSampleSet,
    teacher: &Array2<f64>,
    win: &FrameWindow,
) -> Result<Var, TrainError> {
    let n = samples.len();
    if n == 0 {
        return Err(TrainError::EmptySamples);
    }
    assert_eq!(teacher.dim(), (n, 6));
    let pts = tape.constant(samples.points.clone().into_dyn())?;
    let mut sums = Vec::new();
    for (present, t1, cols) in [
        (win.has_next, samples.time + win.dt, 0..3usize),
        (win.has_prev, samples.time - win.dt, 3..6usize),
    ] {
        if !present {
            continue;
        }
        let warped = net.warp_tape(tape, pts, samples.time, t1, net_vars)?;
        let net_disp = tape.sub(warped, pts)?;
        let target = teacher.slice(ndarray::s![.., cols]).to_owned();
        let target = tape.constant(target.into_dyn())?;
        let diff = tape.sub(net_disp, target)?;
        let norms = tape.norm_last(diff)?;
        sums.push(tape.sum(norms)?);
    }
    Ok(mean_of_sums(tape, &sums, n)?)
}

/// Umbrella smoothness of the warped vertices: squared distance of each
/// vertex to the mean of its neighbors, mean-reduced over vertices.
pub fn loss_laplacian(
    tape: &mut Tape,
    warped: Var,
    neighbors: &[Vec<usize>],
) -> Result<Var, TrainError> {
    let k = tape.value(warped).shape()[0];
    assert_eq!(k, neighbors.len());
    for (i, n) in neighbors.iter().enumerate() {
        if n.is_empty() {
            return Err(TrainError::IsolatedVertex(i));
        }
    }
    let mut avg = Array2::zeros((k, k));
    for (i, n) in neighbors.iter().enumerate() {
        for &j in n {
            avg[[i, j]] = 1.0 / n.len() as f64;
        }
    }
    let avg = tape.constant(avg.into_dyn())?;
    let means = tape.matmul(avg, warped)?;
    let diff = tape.sub(warped, means)?;
    let sq = tape.mul(diff, diff)?;
    let sq = tape.sum_last(sq)?;
    Ok(tape.mean(sq)?)
}

/// Descriptor misalignment between each vertex's reference descriptor and
/// the frame's feature map under the vertex's current projection, in every
/// view it lands in. Mean-reduced over (vertex, view) pairs.
#[allow(clippy::too_many_arguments)]
pub fn loss_feature_photometric(
    tape: &mut Tape,
    net: &InvertibleMotionNet,
    net_vars: &[Var],
    ref_vertices: &Array2<f64>,
    ref_descriptors: &Array2<f64>,
    t_ref: f64,
    t: f64,
    views: &[(Camera, Arc<Array3<f64>>)],
    eps: f64,
    mode: FeatureLossMode,
) -> Result<Var, TrainError> {
    let k = ref_vertices.nrows();
    assert_eq!(ref_descriptors.nrows(), k);
    assert!(eps > 0.0 && eps.is_finite());
    let current = net.warp(ref_vertices, t_ref, t);
    let mut sums = Vec::new();
    let mut count = 0;
    for (camera, feats) in views {
        let kept: Vec<usize> = (0..k)
            .filter(|&i| {
                let p = nalgebra::Point3::new(current[[i, 0]], current[[i, 1]], current[[i, 2]]);
                match camera.project(&p) {
                    Ok((pix, _z)) => camera.contains_pixel(pix),
                    Err(_) => false,
                }
            })
            .collect();
        if kept.is_empty() {
            continue;
        }
        let subset = gather_rows(ref_vertices, &kept);
        let subset = tape.constant(subset.into_dyn())?;
        let warped = net.warp_tape(tape, subset, t_ref, t, net_vars)?;
        let (pix, _z) = project_tape(tape, camera, warped)?;
        let sampled = tape.sample_bilinear(feats.clone(), pix)?;
        let refs = gather_rows(ref_descriptors, &kept);
        let cos = guarded_row_cosine(tape, sampled, &refs)?;
        let neg = tape.neg(cos)?;
        let misalign = tape.add_scalar(neg, 1.0)?;
        let term = match mode {
            FeatureLossMode::Floor => {
                let shifted = tape.add_scalar(misalign, -eps)?;
                let clipped = tape.relu(shifted)?;
                tape.add_scalar(clipped, eps)?
            }
            FeatureLossMode::Cap => {
                let flipped = tape.neg(misalign)?;
                let headroom = tape.add_scalar(flipped, eps)?;
                let clipped = tape.relu(headroom)?;
                let neg_min = tape.neg(clipped)?;
                tape.add_scalar(neg_min, eps)?
            }
        };
        sums.push(tape.sum(term)?);
        count += kept.len();
    }
    if count == 0 {
        return Err(TrainError::NoProjectedVertices);
    }
    Ok(mean_of_sums(tape, &sums, count)?)
}

/// Pixel-space mismatch between ground-truth optical flow at each visible
/// vertex and the displacement of the vertex's projection under the motion
/// network, summed over available directions and mean-reduced over
/// vertices.
#[allow(clippy::too_many_arguments)]
pub fn loss_surface_flow(
    tape: &mut Tape,
    net: &InvertibleMotionNet,
    net_vars: &[Var],
    ref_vertices: &Array2<f64>,
    t_ref: f64,
    camera: &Camera,
    items: &[SurfFlowItem],
    win: &FrameWindow,
) -> Result<Var, TrainError> {
    let contributing = items
        .iter()
        .filter(|it| {
            (win.has_next && it.gt_next.is_some()) || (win.has_prev && it.gt_prev.is_some())
        })
        .count();
    if contributing == 0 {
        return Ok(tape.constant_scalar(0.0)?);
    }
    let mut sums = Vec::new();
    for (present, t_there, pick) in [
        (
            win.has_next,
            win.t + win.dt,
            (|it: &SurfFlowItem| it.gt_next) as fn(&SurfFlowItem) -> Option<[f64; 2]>,
        ),
        (win.has_prev, win.t - win.dt, |it: &SurfFlowItem| it.gt_prev),
    ] {
        if !present {
            continue;
        }
        let used: Vec<&SurfFlowItem> = items.iter().filter(|it| pick(it).is_some()).collect();
        if used.is_empty() {
            continue;
        }
        let idx: Vec<usize> = used.iter().map(|it| it.vertex).collect();
        let subset = gather_rows(ref_vertices, &idx);
        let subset = tape.constant(subset.into_dyn())?;
        let here = net.warp_tape(tape, subset, t_ref, win.t, net_vars)?;
        let there = net.warp_tape(tape, subset, t_ref, t_there, net_vars)?;
        let (pix_here, _) = project_tape(tape, camera, here)?;
        let (pix_there, _) = project_tape(tape, camera, there)?;
        let disp = tape.sub(pix_there, pix_here)?;
        let gt = Array2::from_shape_fn((used.len(), 2), |(i, c)| {
            pick(used[i]).expect("filtered above")[c]
        });
        let gt = tape.constant(gt.into_dyn())?;
        let diff = tape.sub(disp, gt)?;
        let norms = tape.norm_last(diff)?;
        sums.push(tape.sum(norms)?);
    }
    Ok(mean_of_sums(tape, &sums, contributing)?)
}

/// Absolute difference between each visible vertex's camera-frame depth
/// and the field's rendered depth at its pixel, mean-reduced.
#[allow(clippy::too_many_arguments)]
pub fn loss_depth_consistency(
    tape: &mut Tape,
    net: &InvertibleMotionNet,
    net_vars: &[Var],
    ref_vertices: &Array2<f64>,
    t_ref: f64,
    t: f64,
    camera: &Camera,
    items: &[DepthItem],
) -> Result<Var, TrainError> {
    if items.is_empty() {
        return Ok(tape.constant_scalar(0.0)?);
    }
    let idx: Vec<usize> = items.iter().map(|it| it.vertex).collect();
    let subset = gather_rows(ref_vertices, &idx);
    let subset = tape.constant(subset.into_dyn())?;
    let warped = net.warp_tape(tape, subset, t_ref, t, net_vars)?;
    let (_pix, z) = project_tape(tape, camera, warped)?;
    let z = tape.reshape(z, &[items.len()])?;
    let target = Array2::from_shape_fn((1, items.len()), |(_, i)| items[i].field_depth);
    let target = tape.constant(target.into_dyn())?;
    let target = tape.reshape(target, &[items.len()])?;
    let diff = tape.sub(z, target)?;
    let gap = tape.abs(diff)?;
    Ok(tape.mean(gap)?)
}

/// Marks each vertex visible iff it projects inside the image and its
/// camera-frame depth is at most the field's rendered depth at that pixel
/// plus `tol`.
pub fn visible_vertices(
    vertices: &Array2<f64>,
    camera: &Camera,
    depth: &Array2<f64>,
    tol: f64,
) -> Vec<bool> {
    (0..vertices.nrows())
        .map(|i| {
            let p = nalgebra::Point3::new(vertices[[i, 0]], vertices[[i, 1]], vertices[[i, 2]]);
            match camera.project(&p) {
                Ok((pix, z)) => {
                    camera.contains_pixel(pix)
                        && z <= bilinear1(&depth.view(), pix[0], pix[1]) + tol
                }
                Err(_) => false,
            }
        })
        .collect()
}

fn gather_rows(m: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), m.ncols()), |(i, c)| m[[idx[i], c]])
}
