//! Lifting a masked image edit into a textured local surface.

use nalgebra::Point3;
use ndarray::{Array2, Array3};

use super::EditError;
use crate::geometry::{Camera, TriMesh};
use crate::scenefield::{render_pixel, DynamicField, RenderSettings};

/// A single edited frame: the edited image, the region the user touched,
/// and the view it was edited in.
#[derive(Debug, Clone)]
pub struct EditSpec {
    /// Edited image, (H, W, 3), values in [0, 1].
    pub image: Array3<f64>,
    /// True where the user painted, (H, W).
    pub mask: Array2<bool>,
    pub camera: Camera,
    /// Reference time the edit was made at.
    pub time: f64,
}

/// Mesh lifted from an edit, plus the pixel each vertex came from.
#[derive(Debug, Clone)]
pub struct LocalSurface {
    /// Vertices in world coordinates at the reference time, with colors
    /// from the edited image and opacity 1 inside the mask, 0 on the
    /// bounding-box padding.
    pub mesh: TriMesh,
    /// (x, y) source pixel per vertex.
    pub source_pixels: Vec<[f64; 2]>,
}

/// Minimum terminated weight for a rendered depth to anchor a vertex;
/// below it the ray mostly saw background.
pub const MIN_LIFT_WEIGHT: f64 = 0.5;

/// Unprojects the mask's bounding box through the field's depth at the
/// reference view into a pixel-grid mesh.
///
/// Every bounding-box pixel with usable depth becomes a vertex; quads
/// between valid 4-neighbors become two triangles each, and faces with
/// any edge longer than `tau_edge` are dropped as depth discontinuities.
/// `tau_edge` defaults to four times the median adjacent-vertex spacing
/// inside the mask, a scale-free cut.
pub fn lift_edit(
    edit: &EditSpec,
    field: &dyn DynamicField,
    settings: &RenderSettings,
    tau_edge: Option<f64>,
) -> Result<LocalSurface, EditError> {
    let (h, w, _) = edit.image.dim();
    let (mh, mw) = edit.mask.dim();
    if (mh, mw) != (h, w) {
        return Err(EditError::ShapeMismatch {
            image_w: w,
            image_h: h,
            mask_w: mw,
            mask_h: mh,
        });
    }
    if (edit.camera.height, edit.camera.width) != (h, w) {
        return Err(EditError::CameraMismatch {
            image_w: w,
            image_h: h,
            cam_w: edit.camera.width,
            cam_h: edit.camera.height,
        });
    }
    if !edit.mask.iter().any(|&m| m) {
        return Err(EditError::EmptyMask);
    }
    if edit.mask.iter().all(|&m| m) {
        return Err(EditError::MaskCoversImage);
    }

    let (mut x0, mut y0, mut x1, mut y1) = (w, h, 0usize, 0usize);
    for ((py, px), &m) in edit.mask.indexed_iter() {
        if m {
            x0 = x0.min(px);
            x1 = x1.max(px);
            y0 = y0.min(py);
            y1 = y1.max(py);
        }
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    if bw < 2 || bh < 2 {
        return Err(EditError::RegionTooSmall { w: bw, h: bh });
    }

    // One vertex per box pixel, unprojected through the rendered depth.
    let mut positions: Vec<Option<Point3<f64>>> = vec![None; bw * bh];
    let mut colors = Vec::with_capacity(bw * bh);
    let mut opacities = Vec::with_capacity(bw * bh);
    let mut pixels = Vec::with_capacity(bw * bh);
    for py in y0..=y1 {
        for px in x0..=x1 {
            let sample = render_pixel(field, &edit.camera, px as u32, py as u32, edit.time, settings);
            let masked = edit.mask[[py, px]];
            let usable = sample.depth.is_finite() && sample.weight_sum >= MIN_LIFT_WEIGHT;
            if !usable {
                if masked {
                    return Err(EditError::InvalidDepth { x: px, y: py });
                }
            } else {
                let pixel = [px as f64, py as f64];
                positions[(py - y0) * bw + (px - x0)] =
                    Some(edit.camera.unproject(pixel, sample.depth));
            }
            colors.push([
                edit.image[[py, px, 0]],
                edit.image[[py, px, 1]],
                edit.image[[py, px, 2]],
            ]);
            opacities.push(if masked { 1.0 } else { 0.0 });
            pixels.push([px as f64, py as f64]);
        }
    }

    let tau = tau_edge.unwrap_or_else(|| default_tau(&positions, &edit.mask, (x0, y0), (bw, bh)));

    // Two triangles per quad of valid vertices, wound toward the camera,
    // minus any face with an over-long edge.
    let mut faces = Vec::new();
    for r in 0..bh - 1 {
        for c in 0..bw - 1 {
            let a = r * bw + c;
            let b = a + 1;
            let under = a + bw;
            let diag = under + 1;
            for tri in [[a, under, b], [b, under, diag]] {
                let Some(ps) = tri_positions(&positions, tri) else {
                    continue;
                };
                let longest = (ps[0] - ps[1])
                    .norm()
                    .max((ps[1] - ps[2]).norm())
                    .max((ps[2] - ps[0]).norm());
                if longest <= tau {
                    faces.push(tri);
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(EditError::DegenerateSurface);
    }

    // Compact to the vertices faces actually reference.
    let mut remap = vec![usize::MAX; bw * bh];
    let mut mesh = TriMesh::default();
    let mut kept_colors = Vec::new();
    let mut kept_opacities = Vec::new();
    let mut kept_pixels = Vec::new();
    for f in &mut faces {
        for vi in f.iter_mut() {
            if remap[*vi] == usize::MAX {
                remap[*vi] = mesh.vertices.len();
                mesh.vertices.push(positions[*vi].expect("faces use valid vertices"));
                kept_colors.push(colors[*vi]);
                kept_opacities.push(opacities[*vi]);
                kept_pixels.push(pixels[*vi]);
            }
            *vi = remap[*vi];
        }
    }
    mesh.faces = faces;
    mesh.colors = Some(kept_colors);
    mesh.opacities = Some(kept_opacities);
    mesh.validate().expect("constructed mesh is well formed");
    Ok(LocalSurface {
        mesh,
        source_pixels: kept_pixels,
    })
}

fn tri_positions(
    positions: &[Option<Point3<f64>>],
    tri: [usize; 3],
) -> Option<[Point3<f64>; 3]> {
    Some([positions[tri[0]]?, positions[tri[1]]?, positions[tri[2]]?])
}

/// Four times the median 4-neighbor vertex spacing, preferring pairs
/// fully inside the mask and falling back to all valid pairs.
fn default_tau(
    positions: &[Option<Point3<f64>>],
    mask: &Array2<bool>,
    origin: (usize, usize),
    size: (usize, usize),
) -> f64 {
    let (x0, y0) = origin;
    let (bw, bh) = size;
    let mut masked_gaps = Vec::new();
    let mut all_gaps = Vec::new();
    let mut push = |a: usize, b: usize, both_masked: bool| {
        if let (Some(pa), Some(pb)) = (positions[a], positions[b]) {
            let gap = (pa - pb).norm();
            all_gaps.push(gap);
            if both_masked {
                masked_gaps.push(gap);
            }
        }
    };
    for r in 0..bh {
        for c in 0..bw {
            let i = r * bw + c;
            let m = mask[[y0 + r, x0 + c]];
            if c + 1 < bw {
                push(i, i + 1, m && mask[[y0 + r, x0 + c + 1]]);
            }
            if r + 1 < bh {
                push(i, i + bw, m && mask[[y0 + r + 1, x0 + c]]);
            }
        }
    }
    let gaps = if masked_gaps.is_empty() { &mut all_gaps } else { &mut masked_gaps };
    if gaps.is_empty() {
        return f64::INFINITY;
    }
    gaps.sort_by(f64::total_cmp);
    4.0 * gaps[gaps.len() / 2]
}
