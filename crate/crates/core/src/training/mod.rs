//! Joint optimization of the scene-flow field and the invertible motion
//! network against rendered frames of a dynamic field.
//!
//! The flow field learns short-range motion from photometric and flow
//! supervision; the motion network distills that motion into an exactly
//! invertible map so edited-surface vertices can be carried to any frame
//! and back without drift. All losses are plain functions of the models
//! plus precomputed per-iteration data, which keeps their finite-difference
//! checks exact.

mod feature;
mod losses;
mod samples;
mod trainer;

use thiserror::Error;

use crate::autodiff::TapeError;
use crate::localsurface::EditError;
use crate::motion::MotionError;

pub use feature::{sample_descriptor, FeatureProvider, PatchFeatures};
pub use losses::{
    loss_depth_consistency, loss_distill, loss_dynamic_photometric, loss_feature_photometric,
    loss_flow_regularizers, loss_laplacian, loss_motion_matching, loss_surface_flow,
    visible_vertices, DepthItem, FeatureLossMode, MotionRay, PhotoRay, SurfFlowItem,
    COSINE_STABILIZER,
};
pub use samples::SurfSampleSet;
pub use trainer::{
    train, CheckpointInfo, EditSession, LossRow, SessionConfig, TrainOutcome, N_LOSS_TERMS,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("surface sample set is empty")]
    EmptySamples,
    #[error("no ray in the batch has a usable supervision target")]
    NoValidRays,
    #[error("vertex {0} has no neighbors")]
    IsolatedVertex(usize),
    #[error("no vertex projects inside any view")]
    NoProjectedVertices,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Motion(#[from] MotionError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Weight of every loss term; a zero weight disables the term entirely
/// (it is neither evaluated nor logged with a value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub slow: f64,
    pub smooth: f64,
    pub cycle: f64,
    pub dynamic_photometric: f64,
    pub motion_matching: f64,
    pub distill: f64,
    pub laplacian: f64,
    pub feature_photometric: f64,
    pub surface_flow: f64,
    pub depth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            slow: 0.01,
            smooth: 0.1,
            cycle: 1.0,
            dynamic_photometric: 1.0,
            motion_matching: 0.02,
            distill: 1.0,
            laplacian: 0.001,
            feature_photometric: 0.01,
            surface_flow: 0.02,
            depth: 0.1,
        }
    }
}

impl LossWeights {
    /// The same weights with every surface-side term switched off; used
    /// during warmup, when only the flow field is being fitted.
    pub fn flow_only(&self) -> Self {
        LossWeights {
            distill: 0.0,
            laplacian: 0.0,
            feature_photometric: 0.0,
            surface_flow: 0.0,
            depth: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, w) in self.named() {
            if !w.is_finite() || w < 0.0 {
                return Err(TrainError::BadConfig(format!(
                    "loss weight {name} must be finite and non-negative, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Stable (name, value) listing in the order losses are logged.
    pub fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("slow", self.slow),
            ("smooth", self.smooth),
            ("cycle", self.cycle),
            ("dynamic_photometric", self.dynamic_photometric),
            ("motion_matching", self.motion_matching),
            ("distill", self.distill),
            ("laplacian", self.laplacian),
            ("feature_photometric", self.feature_photometric),
            ("surface_flow", self.surface_flow),
            ("depth", self.depth),
        ]
    }
}

/// Time position of one frame inside the sequence: losses that look at a
/// neighboring frame skip directions that would fall off either end.
#[derive(Debug, Clone, Copy)]
pub struct FrameWindow {
    /// Normalized time of the frame, in [0, 1].
    pub t: f64,
    /// Normalized spacing to the adjacent frame.
    pub dt: f64,
    pub has_prev: bool,
    pub has_next: bool,
}

impl FrameWindow {
    /// Window of frame `index` in a sequence of `n_frames` frames spanning
    /// t in [0, 1].
    pub fn at_frame(index: usize, n_frames: usize) -> Self {
        assert!(n_frames >= 2, "a sequence needs at least two frames");
        assert!(index < n_frames);
        let dt = 1.0 / (n_frames - 1) as f64;
        FrameWindow {
            t: index as f64 * dt,
            dt,
            has_prev: index > 0,
            has_next: index + 1 < n_frames,
        }
    }
}
