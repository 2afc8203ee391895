//! Cameras, rays, triangle meshes, and the spatial queries on them.
//!
//! Conventions: world and camera coordinates are right-handed with the
//! camera looking along its +z axis; pixel x grows to the right, pixel y
//! grows downward, and integer pixel coordinates sit at pixel centers.
//! "Depth" always means the camera-frame z coordinate, not ray length.

mod bvh;
mod camera;
mod distance;
mod intersect;
mod mesh;
mod ply;


use nalgebra::{Point3, Unit, Vector3};
use thiserror::Error;

pub use bvh::{brute_force_nearest, Aabb, Bvh, Nearest};
pub use camera::Camera;
pub use distance::closest_point_on_triangle;
pub use intersect::{brute_force_intersect, ray_triangle, Hit};
pub use mesh::TriMesh;
pub use ply::{read_ply, write_ply};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("camera pose is not a rigid transform ({0})")]
    BadPose(String),
    #[error("camera intrinsics invalid ({0})")]
    BadIntrinsics(String),
    #[error("point projects behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("mesh is invalid ({0})")]
    BadMesh(String),
    #[error("PLY parse error at line {line}: {msg}")]
    PlyParse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Half-line with a unit direction.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Self {
            origin,
            dir: Unit::new_normalize(dir),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir.as_ref() * t
    }
}
