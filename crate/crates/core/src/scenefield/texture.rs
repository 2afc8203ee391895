//! Surface textures and a smooth synthetic field for gradient tests.

use nalgebra::{Point3, Vector3};
use ndarray::{Array3, ArrayView2, ArrayView3};

use super::{DifferentiableField, DynamicField};
use crate::geometry::Aabb;

/// Color as a function of (u, v) in [0, 1]^2.
#[derive(Debug, Clone)]
pub enum Texture {
    /// Alternating squares of two colors; `squares` per unit uv.
    Checker {
        squares: usize,
        a: [f64; 3],
        b: [f64; 3],
    },
    /// Bilinearly sampled image, uv mapped over the full image.
    Image(Array3<f64>),
    Solid([f64; 3]),
}

impl Texture {
    pub fn checker(squares: usize) -> Self {
        Texture::Checker {
            squares,
            a: [0.9, 0.9, 0.9],
            b: [0.1, 0.1, 0.1],
        }
    }

    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
        match self {
            Texture::Checker { squares, a, b } => {
                let n = *squares as f64;
                // Clamp the cell index so u = 1 stays in the last cell.
                let iu = ((u * n) as usize).min(squares - 1);
                let iv = ((v * n) as usize).min(squares - 1);
                if (iu + iv) % 2 == 0 {
                    *a
                } else {
                    *b
                }
            }
            Texture::Image(map) => {
                let (h, w, _) = map.dim();
                bilinear3(&map.view(), u * (w as f64 - 1.0), v * (h as f64 - 1.0))
            }
            Texture::Solid(c) => *c,
        }
    }
}

/// Bilinear sample of an (H, W, C>=3) map at fractional pixel (x, y),
/// clamped to the image rectangle. Row index is y, column index is x.
pub fn bilinear3(map: &ArrayView3<f64>, x: f64, y: f64) -> [f64; 3] {
    let (h, w, _) = map.dim();
    let (x0, fx) = split_cell(x, w);
    let (y0, fy) = split_cell(y, h);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let v00 = map[[y0, x0, c]];
        let v01 = map[[y0, x1, c]];
        let v10 = map[[y1, x0, c]];
        let v11 = map[[y1, x1, c]];
        *o = v00 * (1.0 - fx) * (1.0 - fy)
            + v01 * fx * (1.0 - fy)
            + v10 * (1.0 - fx) * fy
            + v11 * fx * fy;
    }
    out
}

/// Bilinear sample of a scalar (H, W) map at fractional pixel (x, y).
pub fn bilinear1(map: &ArrayView2<f64>, x: f64, y: f64) -> f64 {
    let (h, w) = map.dim();
    let (x0, fx) = split_cell(x, w);
    let (y0, fy) = split_cell(y, h);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    map[[y0, x0]] * (1.0 - fx) * (1.0 - fy)
        + map[[y0, x1]] * fx * (1.0 - fy)
        + map[[y1, x0]] * (1.0 - fx) * fy
        + map[[y1, x1]] * fx * fy
}

/// Clamped cell index and in-cell fraction; the index stays one below the
/// last valid sample so index + 1 is always readable.
fn split_cell(x: f64, n: usize) -> (usize, f64) {
    let x = x.clamp(0.0, n as f64 - 1.0);
    let i = (x.floor() as usize).min(n.saturating_sub(2));
    (i, x - i as f64)
}

/// Drifting Gaussian density blobs: a field that is smooth in both space
/// and time, for finite-difference checks of anything differentiated
/// through field queries.
#[derive(Debug, Clone)]
pub struct GaussianBlobField {
    pub blobs: Vec<Blob>,
}

#[derive(Debug, Clone)]
pub struct Blob {
    pub center: Point3<f64>,
    pub velocity: Vector3<f64>,
    pub radius: f64,
    pub amplitude: f64,
    pub color: [f64; 3],
}

impl GaussianBlobField {
    /// A few well-separated blobs inside the unit-ish cube.
    pub fn demo() -> Self {
        GaussianBlobField {
            blobs: vec![
                Blob {
                    center: Point3::new(-0.3, 0.1, 0.2),
                    velocity: Vector3::new(0.2, -0.1, 0.0),
                    radius: 0.35,
                    amplitude: 6.0,
                    color: [0.9, 0.3, 0.2],
                },
                Blob {
                    center: Point3::new(0.4, -0.2, 0.5),
                    velocity: Vector3::new(-0.15, 0.1, 0.1),
                    radius: 0.3,
                    amplitude: 4.0,
                    color: [0.2, 0.5, 0.9],
                },
                Blob {
                    center: Point3::new(0.0, 0.4, -0.2),
                    velocity: Vector3::new(0.0, -0.25, 0.05),
                    radius: 0.4,
                    amplitude: 5.0,
                    color: [0.3, 0.8, 0.4],
                },
            ],
        }
    }
}

impl DynamicField for GaussianBlobField {
    fn query(&self, x: &Point3<f64>, t: f64) -> (f64, [f64; 3]) {
        let mut density = 0.0;
        let mut color = [0.0; 3];
        for b in &self.blobs {
            let c = b.center + b.velocity * t;
            let d2 = (x - c).norm_squared();
            let w = b.amplitude * (-d2 / (2.0 * b.radius * b.radius)).exp();
            density += w;
            for k in 0..3 {
                color[k] += w * b.color[k];
            }
        }
        if density > 1e-12 {
            for c in &mut color {
                *c /= density;
            }
        }
        (density, color)
    }

    fn bounds(&self) -> Aabb {
        Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0))
    }
}

impl DifferentiableField for GaussianBlobField {
    fn query_with_grad(
        &self,
        x: &Point3<f64>,
        t: f64,
    ) -> (f64, [f64; 3], Vector3<f64>, [Vector3<f64>; 3]) {
        let mut density = 0.0;
        let mut numer = [0.0; 3];
        let mut d_density = Vector3::zeros();
        let mut d_numer = [Vector3::zeros(); 3];
        for b in &self.blobs {
            let c = b.center + b.velocity * t;
            let offset = x - c;
            let w = b.amplitude * (-offset.norm_squared() / (2.0 * b.radius * b.radius)).exp();
            let dw = -offset * (w / (b.radius * b.radius));
            density += w;
            d_density += dw;
            for k in 0..3 {
                numer[k] += w * b.color[k];
                d_numer[k] += dw * b.color[k];
            }
        }
        let mut color = [0.0; 3];
        let mut d_color = [Vector3::zeros(); 3];
        // Same normalization branch as `query`: below the cutoff the color
        // is the (vanishing) numerator and its derivative is kept as-is.
        if density > 1e-12 {
            for k in 0..3 {
                color[k] = numer[k] / density;
                d_color[k] = (d_numer[k] - d_density * color[k]) / density;
            }
        } else {
            color = numer;
            d_color = d_numer;
        }
        (density, color, d_density, d_color)
    }

    fn as_dynamic(&self) -> &dyn DynamicField {
        self
    }
}
