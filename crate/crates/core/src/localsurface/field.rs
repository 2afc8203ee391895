//! Distance, density, mask, and color fields induced by a posed surface.

use nalgebra::Point3;

use crate::geometry::{Bvh, Ray, TriMesh};

/// Shape of the density shell around the surface and of the mask band.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceFieldParams {
    /// Laplace scale of the density falloff, world units.
    pub beta: f64,
    /// Mask band half-width; points closer than this count as surface.
    pub gamma: f64,
}

impl Default for SurfaceFieldParams {
    fn default() -> Self {
        Self::with_beta(1e-3)
    }
}

impl SurfaceFieldParams {
    /// The standard coupling gamma = beta.
    pub fn with_beta(beta: f64) -> Self {
        assert!(beta > 0.0, "beta must be positive");
        SurfaceFieldParams { beta, gamma: beta }
    }
}

/// Density at unsigned distance `d` from the surface: the Laplace CDF of
/// scale beta evaluated at -d, amplified by 1/beta. Peaks at 1/(2 beta)
/// on the surface and decays as exp(-d/beta).
pub fn shell_density(d: f64, beta: f64) -> f64 {
    (-d / beta).exp() * (0.5 / beta)
}

/// What a ray learns from its nearest surface intersection.
#[derive(Debug, Clone, Copy)]
pub struct Contact {
    /// Ray distance of the hit.
    pub t: f64,
    pub face: usize,
    /// Barycentric blend of the hit face's vertex colors.
    pub color: [f64; 3],
    /// Barycentric blend of the hit face's vertex opacities; 0 means the
    /// ray only grazed bounding-box padding and the surface should not
    /// render on it.
    pub opacity: f64,
}

/// A surface mesh posed at one frame, with the acceleration structure
/// its field queries need.
pub struct SurfacePose {
    pub mesh: TriMesh,
    bvh: Bvh,
}

impl SurfacePose {
    pub fn new(mesh: TriMesh) -> Self {
        let bvh = Bvh::build(&mesh);
        SurfacePose { mesh, bvh }
    }

    /// Unsigned distance to the mesh; infinite for an empty mesh.
    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.bvh
            .nearest(&self.mesh, p)
            .map_or(f64::INFINITY, |n| n.dist)
    }

    /// Shell density at `p`.
    pub fn density(&self, p: &Point3<f64>, params: &SurfaceFieldParams) -> f64 {
        shell_density(self.distance(p), params.beta)
    }

    /// Nearest intersection with interpolated color and opacity, or None
    /// for rays outside the hit set.
    pub fn contact(&self, ray: &Ray) -> Option<Contact> {
        let hit = self.bvh.intersect(&self.mesh, ray, f64::INFINITY)?;
        let color = match &self.mesh.colors {
            Some(c) => self.mesh.interpolate3(c, hit.face, hit.bary),
            None => [1.0; 3],
        };
        let opacity = match &self.mesh.opacities {
            Some(o) => self.mesh.interpolate1(o, hit.face, hit.bary),
            None => 1.0,
        };
        Some(Contact {
            t: hit.t,
            face: hit.face,
            color,
            opacity,
        })
    }

    /// Mask value at a point on a ray: 1 only within `gamma` of the
    /// surface and only on rays that intersect the mesh at all.
    pub fn mask(&self, p: &Point3<f64>, ray_hits: bool, params: &SurfaceFieldParams) -> bool {
        ray_hits && self.distance(p) < params.gamma
    }
}
