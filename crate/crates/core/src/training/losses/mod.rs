//! The individual training losses.
//!
//! Every loss is a pure function of the differentiated model plus plain
//! data the trainer precomputed for the iteration (supervision targets,
//! cached ray profiles, visibility decisions). Lagged or detached
//! quantities therefore enter as constants, which keeps each loss exactly
//! finite-difference checkable. All losses are mean-reduced over the items
//! they see, are non-negative, and vanish on their definitional zero.

mod flow;
mod surface;

pub use flow::{
    loss_dynamic_photometric, loss_flow_regularizers, loss_motion_matching, MotionRay, PhotoRay,
};
pub use surface::{
    loss_depth_consistency, loss_distill, loss_feature_photometric, loss_laplacian,
    loss_surface_flow, visible_vertices, DepthItem, FeatureLossMode, SurfFlowItem,
};

use ndarray::Array2;

use crate::autodiff::{Tape, TapeError, Var};
use crate::geometry::Camera;

/// Constant channel appended to both sides of the descriptor cosine so the
/// denominator is bounded away from zero even for empty descriptors.
pub const COSINE_STABILIZER: f64 = 0.05;

/// Camera projection on the tape: (B, 3) world points to ((B, 2) pixels,
/// (B, 1) camera-frame depth). Callers must only pass points in front of
/// the camera; that is checked against the linearization values.
pub(crate) fn project_tape(
    tape: &mut Tape,
    camera: &Camera,
    pts: Var,
) -> Result<(Var, Var), TapeError> {
    let m = camera.cam_to_world();
    let r = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t = m.fixed_view::<3, 1>(0, 3).into_owned();
    let t_w2c = -(r.transpose() * t);
    // Row-vector form of cam = R^T (p - t): right-multiply by R, then add
    // the world-to-cam translation.
    let rot = Array2::from_shape_fn((3, 3), |(i, j)| r[(i, j)]);
    let rot = tape.constant(rot.into_dyn())?;
    let shift = Array2::from_shape_fn((1, 3), |(_, j)| t_w2c[j]);
    let shift = tape.constant(shift.into_dyn())?;
    let shift = tape.reshape(shift, &[3])?;
    let cam = tape.matmul(pts, rot)?;
    let cam = tape.add_row(cam, shift)?;
    let z = tape.slice_cols(cam, 2..3)?;
    for (i, zv) in tape.value(z).iter().enumerate() {
        assert!(
            *zv > 1e-9,
            "point {i} sits behind the camera (z = {zv}); filter before projecting"
        );
    }
    let x = tape.slice_cols(cam, 0..1)?;
    let y = tape.slice_cols(cam, 1..2)?;
    let xz = tape.div(x, z)?;
    let yz = tape.div(y, z)?;
    let px = tape.mul_scalar(xz, camera.fx)?;
    let px = tape.add_scalar(px, camera.cx)?;
    let py = tape.mul_scalar(yz, camera.fy)?;
    let py = tape.add_scalar(py, camera.cy)?;
    let pixels = tape.concat_cols(&[px, py])?;
    Ok((pixels, z))
}

/// Cosine between tape rows `a` and constant rows `b`, each extended by a
/// [`COSINE_STABILIZER`] channel. Identical rows still give exactly 1;
/// zero rows give 1 through the stabilizer instead of 0/0.
pub(crate) fn guarded_row_cosine(
    tape: &mut Tape,
    a: Var,
    b: &Array2<f64>,
) -> Result<Var, TapeError> {
    let rows = tape.value(a).shape()[0];
    assert_eq!(rows, b.nrows());
    let stab_col = Array2::from_elem((rows, 1), COSINE_STABILIZER);
    let stab_col = tape.constant(stab_col.into_dyn())?;
    let ga = tape.concat_cols(&[a, stab_col])?;
    let mut gb = Array2::zeros((rows, b.ncols() + 1));
    gb.slice_mut(ndarray::s![.., ..b.ncols()]).assign(b);
    gb.column_mut(b.ncols()).fill(COSINE_STABILIZER);
    let gb_norms = Array2::from_shape_fn((1, rows), |(_, i)| {
        gb.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    });
    let gb_var = tape.constant(gb.into_dyn())?;
    let gb_norms = tape.constant(gb_norms.into_dyn())?;
    let gb_norms = tape.reshape(gb_norms, &[rows])?;
    let prod = tape.mul(ga, gb_var)?;
    let dot = tape.sum_last(prod)?;
    let na = tape.norm_last(ga)?;
    let denom = tape.mul(na, gb_norms)?;
    tape.div(dot, denom)
}

/// Combines per-batch sums into one mean over `count` items. An empty term
/// list is a definitional zero.
pub(crate) fn mean_of_sums(
    tape: &mut Tape,
    sums: &[Var],
    count: usize,
) -> Result<Var, TapeError> {
    match sums {
        [] => tape.constant_scalar(0.0),
        [first, rest @ ..] => {
            let mut total = *first;
            for s in rest {
                total = tape.add(total, *s)?;
            }
            tape.mul_scalar(total, 1.0 / count as f64)
        }
    }
}
