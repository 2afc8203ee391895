//! Occlusion-correct compositing of a posed surface into a dynamic field.
//!
//! Per sample the mask field selects exactly one density/color pair:
//! the surface's inside the mask band of an intersecting ray, the
//! field's everywhere else. Transmittance accumulates over the selected
//! densities, so the surface both occludes and is occluded by the field
//! with no separate z-test. Rays that never touch the mesh run the plain
//! field renderer, byte for byte.

use rayon::prelude::*;

use super::field::{shell_density, SurfaceFieldParams, SurfacePose};
use crate::geometry::{Camera, Ray};
use crate::scenefield::{
    deltas_from_ts, ray_profile, ray_rng, render_pixel, resolve_profile, stratified_ts,
    transmittance_weights, DynamicField, PixelSample, RayProfile, RenderSettings, RenderedFrame,
};

use super::field::Contact;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeMode {
    /// Mask-selected compositing: the surface replaces the field inside
    /// its band and leaves it untouched elsewhere.
    Full,
    /// Ablation: densities add and colors blend by density, with no
    /// suppression of the field inside the surface band.
    NoMaskField,
    /// Ablation: render the field alone, then alpha-over the surface as
    /// a flat rasterized layer, ignoring every occluder.
    NoOcclusion,
}

#[derive(Debug, Clone)]
pub struct CompositeSettings {
    pub render: RenderSettings,
    pub params: SurfaceFieldParams,
    pub mode: CompositeMode,
    /// Extra samples packed around the ray's surface contact; the shell
    /// is far thinner than a uniform stratum, so without these it is
    /// skipped entirely at typical sample counts.
    pub refine_samples: usize,
    /// Half-width of the refinement window, in units of beta.
    pub refine_halfwidth: f64,
}

impl Default for CompositeSettings {
    fn default() -> Self {
        CompositeSettings {
            render: RenderSettings::default(),
            params: SurfaceFieldParams::default(),
            mode: CompositeMode::Full,
            refine_samples: 32,
            refine_halfwidth: 4.0,
        }
    }
}

/// A contact the renderer should act on: visible opacity, inside the
/// sampled depth range.
fn live_contact(surface: &SurfacePose, ray: &Ray, cs: &CompositeSettings) -> Option<Contact> {
    let c = surface.contact(ray)?;
    (c.opacity > 0.0 && c.t >= cs.render.near && c.t <= cs.render.far).then_some(c)
}

/// Integrand of the composited ray: per-sample effective density and
/// color after mask selection (or density blending, for the no-mask
/// ablation). Rays with no live contact return the field's own profile
/// unchanged; in the no-occlusion mode every ray does.
pub fn composite_profile(
    field: &dyn DynamicField,
    surface: &SurfacePose,
    camera: &Camera,
    px: u32,
    py: u32,
    t: f64,
    cs: &CompositeSettings,
) -> RayProfile {
    let pixel = [px as f64, py as f64];
    let ray = camera.ray_through(pixel);
    let contact = if cs.mode == CompositeMode::NoOcclusion {
        None
    } else {
        live_contact(surface, &ray, cs)
    };
    let Some(contact) = contact else {
        return ray_profile(field, camera, px, py, t, &cs.render);
    };

    let mut rng = ray_rng(cs.render.seed, px, py);
    let mut ts = stratified_ts(&cs.render, &mut rng);
    let halfwidth = cs.refine_halfwidth * cs.params.beta;
    let lo = (contact.t - halfwidth).max(cs.render.near);
    let hi = (contact.t + halfwidth).min(cs.render.far);
    if cs.refine_samples > 0 && hi > lo {
        let width = (hi - lo) / cs.refine_samples as f64;
        for i in 0..cs.refine_samples {
            ts.push(lo + (i as f64 + 0.5) * width);
        }
        ts.sort_by(f64::total_cmp);
    }
    let deltas = deltas_from_ts(&ts, cs.render.far);
    let points: Vec<_> = ts.iter().map(|&tt| ray.at(tt)).collect();

    let mut sigmas = Vec::with_capacity(points.len());
    let mut colors = Vec::with_capacity(points.len());
    for p in &points {
        let (sigma_d, color_d) = field.query(p, t);
        let d = surface.distance(p);
        let sigma_s = contact.opacity * shell_density(d, cs.params.beta);
        let (sigma, color) = match cs.mode {
            CompositeMode::Full => {
                if d < cs.params.gamma {
                    (sigma_s, contact.color)
                } else {
                    (sigma_d, color_d)
                }
            }
            CompositeMode::NoMaskField => {
                let sigma = sigma_d + sigma_s;
                let color = if sigma > 1e-12 {
                    let mut c = [0.0; 3];
                    for k in 0..3 {
                        c[k] = (sigma_d * color_d[k] + sigma_s * contact.color[k]) / sigma;
                    }
                    c
                } else {
                    color_d
                };
                (sigma, color)
            }
            CompositeMode::NoOcclusion => unreachable!("no-occlusion rays take the field profile"),
        };
        sigmas.push(sigma);
        colors.push(color);
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

pub fn composite_pixel(
    field: &dyn DynamicField,
    surface: &SurfacePose,
    camera: &Camera,
    px: u32,
    py: u32,
    t: f64,
    cs: &CompositeSettings,
) -> PixelSample {
    if cs.mode == CompositeMode::NoOcclusion {
        let base = render_pixel(field, camera, px, py, t, &cs.render);
        let pixel = [px as f64, py as f64];
        let ray = camera.ray_through(pixel);
        let Some(contact) = live_contact(surface, &ray, cs) else {
            return base;
        };
        let o = contact.opacity;
        let mut color = [0.0; 3];
        for k in 0..3 {
            color[k] = o * contact.color[k] + (1.0 - o) * base.color[k];
        }
        // Weight and transmittance keep their field meaning; depth
        // follows whichever layer dominates the pixel.
        let depth = if o >= 0.5 {
            contact.t * camera.ray_depth_scale(pixel)
        } else {
            base.depth
        };
        return PixelSample {
            color,
            depth,
            ..base
        };
    }
    resolve_profile(
        &composite_profile(field, surface, camera, px, py, t, cs),
        &cs.render,
    )
}

/// Renders the field with the surface composited in, rows in parallel.
pub fn composite_render(
    field: &dyn DynamicField,
    surface: &SurfacePose,
    camera: &Camera,
    t: f64,
    cs: &CompositeSettings,
) -> RenderedFrame {
    let (w, h) = (camera.width, camera.height);
    let rows: Vec<Vec<PixelSample>> = (0..h as u32)
        .into_par_iter()
        .map(|py| {
            (0..w as u32)
                .map(|px| composite_pixel(field, surface, camera, px, py, t, cs))
                .collect()
        })
        .collect();
    let mut frame = RenderedFrame {
        color: ndarray::Array3::zeros((h, w, 3)),
        depth: ndarray::Array2::zeros((h, w)),
    };
    for (y, row) in rows.iter().enumerate() {
        for (x, s) in row.iter().enumerate() {
            for k in 0..3 {
                frame.color[[y, x, k]] = s.color[k];
            }
            frame.depth[[y, x]] = s.depth;
        }
    }
    frame
}
