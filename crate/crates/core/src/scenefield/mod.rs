//! Dynamic volumetric scenes and the stratified volume renderer.
//!
//! A scene is anything that can answer density/color queries at a world
//! point and a time in [0, 1]. The analytic scenes here have exact rigid
//! part motions, so ground-truth deformation and optical flow are
//! available in closed form for testing and evaluation.

mod analytic;
mod render;
mod texture;

#[cfg(test)]
mod tests;

use nalgebra::{Point3, Vector3};

use crate::geometry::Aabb;

pub use analytic::{AnalyticFlow, AnalyticScene, Part, RigidMotion, SceneKind, Shape, SOLID_DENSITY};
pub use render::{
    deltas_from_ts, ray_profile, ray_rng, render_image, render_pixel, resolve_profile,
    stratified_ts, transmittance_weights, DepthMode, PixelSample, RayProfile, RenderSettings,
    RenderedFrame,
};
pub use texture::{bilinear1, bilinear3, Blob, GaussianBlobField, Texture};

/// Density/color field over space and time; time is normalized to [0, 1].
pub trait DynamicField: Sync {
    /// Returns (density, rgb color) at a world point. Density is
    /// non-negative; colors live in [0, 1].
    fn query(&self, x: &Point3<f64>, t: f64) -> (f64, [f64; 3]);

    /// Axis-aligned region holding essentially all density; used to pick
    /// sampling ranges.
    fn bounds(&self) -> Aabb;
}

/// Field that can also report position derivatives of its density and
/// color, so losses can differentiate renders through sample positions.
///
/// The derivative is the field's own contract: a piecewise-constant field
/// legitimately reports zeros (its derivative vanishes wherever it is
/// defined), which makes photometric gradients inert on such fields while
/// staying exact.
pub trait DifferentiableField: DynamicField {
    /// Returns (density, color, d density / dx, d color / dx) at a point.
    fn query_with_grad(
        &self,
        x: &Point3<f64>,
        t: f64,
    ) -> (f64, [f64; 3], Vector3<f64>, [Vector3<f64>; 3]);

    /// The same field viewed through its plain query interface.
    fn as_dynamic(&self) -> &dyn DynamicField;
}

/// Ground-truth pixel motion between two times, for training and eval.
pub trait FlowProvider {
    /// Optical flow at a (possibly fractional) pixel: where the surface
    /// seen at `pixel` at time `t0` appears at time `t1`, minus `pixel`.
    /// `None` when the pixel sees background.
    fn flow(&self, pixel: [f64; 2], t0: f64, t1: f64) -> Option<[f64; 2]>;
}
