//! Edited-region surfaces: lifting a masked image edit to a textured
//! mesh, turning that mesh into density/mask fields, and compositing it
//! into a dynamic field with correct occlusion.

mod composite;
mod field;
mod lift;
#[cfg(test)]
mod tests;

use thiserror::Error;

pub use composite::{
    composite_pixel, composite_profile, composite_render, CompositeMode, CompositeSettings,
};
pub use field::{shell_density, Contact, SurfaceFieldParams, SurfacePose};
pub use lift::{lift_edit, EditSpec, LocalSurface, MIN_LIFT_WEIGHT};

#[derive(Debug, Error)]
pub enum EditError {
    #[error("edit mask is empty")]
    EmptyMask,
    #[error("edit mask covers the whole image; a local edit must leave context")]
    MaskCoversImage,
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    ShapeMismatch {
        image_w: usize,
        image_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("camera is {cam_w}x{cam_h} but image is {image_w}x{image_h}")]
    CameraMismatch {
        image_w: usize,
        image_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
    #[error("masked pixel ({x}, {y}) has no usable depth")]
    InvalidDepth { x: usize, y: usize },
    #[error("edit bounding box is {w}x{h} pixels; meshing needs at least 2x2")]
    RegionTooSmall { w: usize, h: usize },
    #[error("no faces survived the depth-discontinuity cut; the edit region has no connected geometry")]
    DegenerateSurface,
}
