//! Local appearance editing for dynamic volumetric scenes.
//!
//! The pipeline lifts a user-edited image region into a textured local
//! surface anchored at one reference frame, distills the scene's motion
//! into an exactly invertible warp so the surface can be carried to any
//! other frame, and composites the surface back into the underlying
//! density field with correct occlusion.
//!
//! Module map:
//! - [`autodiff`]: dense-tensor reverse-mode differentiation and Adam.
//! - [`geometry`]: cameras, rays, triangle meshes, BVH queries, PLY I/O.
//! - [`scenefield`]: dynamic density/color fields, analytic test scenes,
//!   and the base volume renderer.
//! - [`localsurface`]: edit lifting and occlusion-aware compositing.
//! - [`motion`]: invertible coupling warp and the scene flow field.
//! - [`training`]: losses, feature descriptors, and the fitting loop.
//! - [`eval`]: correspondence prediction and tracking metrics.

pub mod autodiff;
pub mod eval;
pub mod geometry;
pub mod localsurface;
pub mod motion;
pub mod scenefield;
pub mod training;
