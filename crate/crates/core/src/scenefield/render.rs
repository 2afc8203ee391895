//! Stratified emission-absorption volume rendering.
//!
//! Rays are integrated front to back: sample i gets weight
//! w_i = T_i * (1 - exp(-sigma_i * delta_i)) with T_i the transmittance
//! accumulated before it, and whatever survives the whole ray goes to
//! the background color. Weights plus final transmittance telescope to
//! exactly one.

use nalgebra::Point3;
use ndarray::{Array2, Array3};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::DynamicField;
use crate::geometry::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMode {
    /// Weight-averaged camera depth of the ray's samples.
    Expected,
    /// Depth where accumulated transmittance first drops below one half.
    MedianTermination,
}

#[derive(Debug, Clone)]
pub struct RenderSettings {
    pub n_samples: usize,
    /// Stratified jitter; false places samples at stratum midpoints.
    pub jitter: bool,
    pub seed: u64,
    pub background: [f64; 3],
    /// Sampling range as distance along the ray.
    pub near: f64,
    pub far: f64,
    pub depth_mode: DepthMode,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            n_samples: 128,
            jitter: true,
            seed: 0,
            background: [0.0; 3],
            near: 0.2,
            far: 4.2,
            depth_mode: DepthMode::Expected,
        }
    }
}

/// Per-ray generator derived only from the global seed and the pixel
/// index, never from scene content, so identical rays sample identical
/// points no matter what else is in the scene.
pub fn ray_rng(seed: u64, px: u32, py: u32) -> ChaCha8Rng {
    let pixel = ((py as u64) << 32) | px as u64;
    let mixed = (seed ^ pixel.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x243F_6A88_85A3_08D3);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Stratified sample distances in [near, far): one per stratum.
pub fn stratified_ts(settings: &RenderSettings, rng: &mut dyn RngCore) -> Vec<f64> {
    let n = settings.n_samples;
    let width = (settings.far - settings.near) / n as f64;
    (0..n)
        .map(|i| {
            let u = if settings.jitter { rng.gen::<f64>() } else { 0.5 };
            settings.near + (i as f64 + u) * width
        })
        .collect()
}

/// Distance from each sample to the next; the last runs to `far`.
pub fn deltas_from_ts(ts: &[f64], far: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(ts.len());
    for i in 0..ts.len() {
        let next = if i + 1 < ts.len() { ts[i + 1] } else { far };
        out.push((next - ts[i]).max(0.0));
    }
    out
}

/// Front-to-back weights and the transmittance left after the last
/// sample. Guarantees sum(weights) + remaining == 1 up to rounding.
pub fn transmittance_weights(sigmas: &[f64], deltas: &[f64]) -> (Vec<f64>, f64) {
    debug_assert_eq!(sigmas.len(), deltas.len());
    let mut weights = Vec::with_capacity(sigmas.len());
    let mut trans = 1.0;
    for (&s, &d) in sigmas.iter().zip(deltas) {
        let alpha = 1.0 - (-s * d).exp();
        weights.push(trans * alpha);
        trans *= 1.0 - alpha;
    }
    (weights, trans)
}

/// Everything one ray saw; training reuses the raw sample data.
#[derive(Debug, Clone)]
pub struct RayProfile {
    pub ts: Vec<f64>,
    pub deltas: Vec<f64>,
    pub points: Vec<Point3<f64>>,
    pub sigmas: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    /// Transmittance remaining after the final sample.
    pub transmittance: f64,
    /// Ray-distance to camera-depth conversion factor for this pixel.
    pub depth_scale: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PixelSample {
    pub color: [f64; 3],
    /// Camera-frame depth, by the settings' depth mode.
    pub depth: f64,
    pub weight_sum: f64,
    pub transmittance: f64,
}

/// Integrates one ray through the field at time t.
pub fn ray_profile(
    field: &dyn DynamicField,
    camera: &Camera,
    px: u32,
    py: u32,
    t: f64,
    settings: &RenderSettings,
) -> RayProfile {
    let pixel = [px as f64, py as f64];
    let ray = camera.ray_through(pixel);
    let mut rng = ray_rng(settings.seed, px, py);
    let ts = stratified_ts(settings, &mut rng);
    let deltas = deltas_from_ts(&ts, settings.far);
    let points: Vec<Point3<f64>> = ts.iter().map(|&tt| ray.at(tt)).collect();
    let mut sigmas = Vec::with_capacity(ts.len());
    let mut colors = Vec::with_capacity(ts.len());
    for p in &points {
        let (s, c) = field.query(p, t);
        sigmas.push(s);
        colors.push(c);
    }
    let (weights, transmittance) = transmittance_weights(&sigmas, &deltas);
    RayProfile {
        ts,
        deltas,
        points,
        sigmas,
        colors,
        weights,
        transmittance,
        depth_scale: camera.ray_depth_scale(pixel),
    }
}

/// Collapses a profile to color and depth.
pub fn resolve_profile(profile: &RayProfile, settings: &RenderSettings) -> PixelSample {
    let mut color = [0.0; 3];
    let mut weight_sum = 0.0;
    for (w, c) in profile.weights.iter().zip(&profile.colors) {
        weight_sum += w;
        for k in 0..3 {
            color[k] += w * c[k];
        }
    }
    for (k, c) in color.iter_mut().enumerate() {
        *c += profile.transmittance * settings.background[k];
    }
    let far_depth = settings.far * profile.depth_scale;
    let depth = match settings.depth_mode {
        DepthMode::Expected => {
            if weight_sum > 1e-12 {
                let mut d = 0.0;
                for (w, tt) in profile.weights.iter().zip(&profile.ts) {
                    d += w * tt * profile.depth_scale;
                }
                d / weight_sum
            } else {
                far_depth
            }
        }
        DepthMode::MedianTermination => {
            let mut trans = 1.0;
            let mut depth = far_depth;
            for (w, tt) in profile.weights.iter().zip(&profile.ts) {
                trans -= w;
                if trans < 0.5 {
                    depth = tt * profile.depth_scale;
                    break;
                }
            }
            depth
        }
    };
    PixelSample {
        color,
        depth,
        weight_sum,
        transmittance: profile.transmittance,
    }
}

pub fn render_pixel(
    field: &dyn DynamicField,
    camera: &Camera,
    px: u32,
    py: u32,
    t: f64,
    settings: &RenderSettings,
) -> PixelSample {
    resolve_profile(&ray_profile(field, camera, px, py, t, settings), settings)
}

/// Color (H, W, 3) and depth (H, W) images.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub color: Array3<f64>,
    pub depth: Array2<f64>,
}

/// Renders every pixel at time t, rows in parallel. Per-ray generators
/// make the result independent of thread scheduling.
pub fn render_image(
    field: &dyn DynamicField,
    camera: &Camera,
    t: f64,
    settings: &RenderSettings,
) -> RenderedFrame {
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<PixelSample>> = (0..h as u32)
        .into_par_iter()
        .map(|py| {
            (0..w as u32)
                .map(|px| render_pixel(field, camera, px, py, t, settings))
                .collect()
        })
        .collect();
    let mut color = Array3::zeros((h, w, 3));
    let mut depth = Array2::zeros((h, w));
    for (y, row) in rows.iter().enumerate() {
        for (x, s) in row.iter().enumerate() {
            for k in 0..3 {
                color[[y, x, k]] = s.color[k];
            }
            depth[[y, x]] = s.depth;
        }
    }
    RenderedFrame { color, depth }
}
