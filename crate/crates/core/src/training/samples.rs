//! Point sets concentrated around the tracked surface, used to focus the
//! flow regularizers and the distillation loss where motion must be right.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// Points near the surface at one time, as an (N, 3) row matrix.
#[derive(Debug, Clone)]
pub struct SurfSampleSet {
    pub points: Array2<f64>,
    /// Normalized time the points belong to.
    pub time: f64,
}

impl SurfSampleSet {
    /// The vertices themselves plus `copies` jittered duplicates, each
    /// offset uniformly within a ball of `radius`. Every sample is within
    /// `radius` of a vertex by construction.
    pub fn around_vertices(
        vertices: &Array2<f64>,
        time: f64,
        copies: usize,
        radius: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, TrainError> {
        let n = vertices.nrows();
        if n == 0 {
            return Err(TrainError::EmptySamples);
        }
        assert_eq!(vertices.ncols(), 3);
        assert!(radius >= 0.0 && radius.is_finite());
        let mut points = Array2::zeros((n * (1 + copies), 3));
        points.slice_mut(ndarray::s![..n, ..]).assign(vertices);
        for c in 0..copies {
            for i in 0..n {
                let offset = ball_sample(radius, rng);
                for k in 0..3 {
                    points[[(c + 1) * n + i, k]] = vertices[[i, k]] + offset[k];
                }
            }
        }
        Ok(SurfSampleSet { points, time })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }
}

/// Uniform sample from a ball of `radius` via cube rejection.
fn ball_sample(radius: f64, rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
            rng.gen_range(-1.0..=1.0),
        ];
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            return [v[0] * radius, v[1] * radius, v[2] * radius];
        }
    }
}
