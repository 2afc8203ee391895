//! Dense per-pixel descriptors used to match reprojected surface vertices
//! against observed frames.

use ndarray::{Array3, ArrayView3};

/// Turns an RGB image into a dense per-pixel descriptor map.
pub trait FeatureProvider {
    /// Descriptor length.
    fn dim(&self) -> usize;

    /// (H, W, dim) descriptors for an (H, W, 3) image; every pixel gets
    /// one, with replicated edges where the support leaves the frame.
    fn extract(&self, image: &Array3<f64>) -> Array3<f64>;
}

/// Contrast-normalized grayscale patches plus image gradients.
///
/// Per pixel: the 5x5 grayscale neighborhood minus its own mean (25
/// values), then central-difference x and y gradients, all divided by the
/// patch norm guarded with `norm_floor`. Flat regions therefore map to the
/// zero descriptor instead of amplified noise.
#[derive(Debug, Clone)]
pub struct PatchFeatures {
    pub norm_floor: f64,
}

impl Default for PatchFeatures {
    fn default() -> Self {
        PatchFeatures { norm_floor: 1e-3 }
    }
}

const PATCH: i64 = 5;
const HALF: i64 = PATCH / 2;
pub(crate) const PATCH_DIM: usize = (PATCH * PATCH) as usize + 2;

impl FeatureProvider for PatchFeatures {
    fn dim(&self) -> usize {
        PATCH_DIM
    }

    fn extract(&self, image: &Array3<f64>) -> Array3<f64> {
        let (h, w, c) = image.dim();
        assert_eq!(c, 3, "expected an RGB image");
        assert!(h > 0 && w > 0);
        let gray = |y: i64, x: i64| -> f64 {
            let y = y.clamp(0, h as i64 - 1) as usize;
            let x = x.clamp(0, w as i64 - 1) as usize;
            (image[[y, x, 0]] + image[[y, x, 1]] + image[[y, x, 2]]) / 3.0
        };
        let mut out = Array3::zeros((h, w, PATCH_DIM));
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut d = [0.0; PATCH_DIM];
                let mut mean = 0.0;
                let mut i = 0;
                for dy in -HALF..=HALF {
                    for dx in -HALF..=HALF {
                        let g = gray(y + dy, x + dx);
                        d[i] = g;
                        mean += g;
                        i += 1;
                    }
                }
                mean /= (PATCH * PATCH) as f64;
                for v in d.iter_mut().take(i) {
                    *v -= mean;
                }
                d[i] = (gray(y, x + 1) - gray(y, x - 1)) / 2.0;
                d[i + 1] = (gray(y + 1, x) - gray(y - 1, x)) / 2.0;
                let norm = (d.iter().map(|v| v * v).sum::<f64>()
                    + self.norm_floor * self.norm_floor)
                    .sqrt();
                for (k, v) in d.iter().enumerate() {
                    out[[y as usize, x as usize, k]] = v / norm;
                }
            }
        }
        out
    }
}

/// Bilinearly sampled descriptor at a fractional pixel of a feature map,
/// clamped to the frame.
pub fn sample_descriptor(map: ArrayView3<f64>, pixel: [f64; 2]) -> Vec<f64> {
    let (h, w, d) = map.dim();
    let cell = |v: f64, n: usize| -> (usize, usize, f64) {
        let v = v.clamp(0.0, (n - 1) as f64);
        let i0 = v.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, v - i0 as f64)
    };
    let (x0, x1, fx) = cell(pixel[0], w);
    let (y0, y1, fy) = cell(pixel[1], h);
    (0..d)
        .map(|k| {
            let top = map[[y0, x0, k]] * (1.0 - fx) + map[[y0, x1, k]] * fx;
            let bot = map[[y1, x0, k]] * (1.0 - fx) + map[[y1, x1, k]] * fx;
            top * (1.0 - fy) + bot * fy
        })
        .collect()
}
