//! Analytic dynamic scenes built from rigidly moving solid parts.
//!
//! Every part's shape is defined in the world frame at t = 0 and carried
//! by an exact rigid motion, so deformation between any two times and
//! the optical flow it induces are available in closed form.

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};

use super::{DifferentiableField, DynamicField, FlowProvider, Texture};
use crate::geometry::{Aabb, Camera, Ray};

/// Density inside every solid part.
pub const SOLID_DENSITY: f64 = 500.0;

/// Rigid trajectory; `pose(0)` is always the identity.
#[derive(Debug, Clone)]
pub enum RigidMotion {
    Static,
    /// Constant linear velocity.
    Translate(Vector3<f64>),
    /// Constant angular velocity about an axis through `center`, with an
    /// optional linear drift on top.
    Rotate {
        center: Point3<f64>,
        axis: Unit<Vector3<f64>>,
        omega: f64,
        drift: Vector3<f64>,
    },
}

impl RigidMotion {
    /// World-from-initial transform at time t.
    pub fn pose(&self, t: f64) -> Isometry3<f64> {
        match self {
            RigidMotion::Static => Isometry3::identity(),
            RigidMotion::Translate(v) => Isometry3::from_parts(
                Translation3::from(v * t),
                UnitQuaternion::identity(),
            ),
            RigidMotion::Rotate {
                center,
                axis,
                omega,
                drift,
            } => {
                let rot = UnitQuaternion::from_axis_angle(axis, omega * t);
                // x -> c + dt*drift + R (x - c)
                let shift = center.coords + drift * t - rot * center.coords;
                Isometry3::from_parts(Translation3::from(shift), rot)
            }
        }
    }
}

/// Solid shape in the part's t = 0 frame.
#[derive(Debug, Clone)]
pub enum Shape {
    /// Axis-aligned box given by center and half extents.
    Slab {
        center: Point3<f64>,
        half: Vector3<f64>,
    },
    Sphere { center: Point3<f64>, radius: f64 },
}

impl Shape {
    fn contains(&self, p: &Point3<f64>) -> bool {
        match self {
            Shape::Slab { center, half } => {
                let d = p - center;
                d.x.abs() <= half.x && d.y.abs() <= half.y && d.z.abs() <= half.z
            }
            Shape::Sphere { center, radius } => (p - center).norm() <= *radius,
        }
    }

    /// First positive ray parameter where the ray enters the shape.
    fn enter(&self, ray: &Ray) -> Option<f64> {
        match self {
            Shape::Slab { center, half } => {
                let aabb = Aabb::new(center - half, center + half);
                let (lo, _) = aabb.ray_range(ray, 0.0, f64::INFINITY)?;
                Some(lo)
            }
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - center;
                let b = oc.dot(&ray.dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let t = -b - disc.sqrt();
                if t > 0.0 {
                    Some(t)
                } else if -b + disc.sqrt() > 0.0 {
                    // Origin inside the sphere.
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Texture coordinates for a point on or in the shape.
    fn uv(&self, p: &Point3<f64>) -> (f64, f64) {
        match self {
            Shape::Slab { center, half } => {
                let d = p - center;
                (
                    (d.x / (2.0 * half.x) + 0.5).clamp(0.0, 1.0),
                    (d.y / (2.0 * half.y) + 0.5).clamp(0.0, 1.0),
                )
            }
            Shape::Sphere { center, radius } => {
                let d = (p - center) / *radius;
                let u = d.x.atan2(d.z) / (2.0 * std::f64::consts::PI) + 0.5;
                let v = (d.y.clamp(-1.0, 1.0)).acos() / std::f64::consts::PI;
                (u, v)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Part {
    pub shape: Shape,
    pub motion: RigidMotion,
    pub texture: Texture,
}

/// Named scene layouts with known-good cameras and motion scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// One textured slab translating parallel to the image plane.
    PlaneTranslation,
    /// One textured slab rotating in-plane while drifting.
    PlaneRigid,
    /// Static textured backdrop with a solid sphere orbiting in front;
    /// the sphere crosses the optical axis at t = 0.
    OrbitingSphere,
    /// Two slabs side by side with independent rigid motions.
    TwoPartArticulated,
}

#[derive(Debug, Clone)]
pub struct AnalyticScene {
    pub parts: Vec<Part>,
    bounds: Aabb,
}

impl AnalyticScene {
    pub fn new(kind: SceneKind, texture: Texture) -> Self {
        let bounds = Aabb::new(Point3::new(-1.0, -1.0, -1.0), Point3::new(1.0, 1.0, 1.0));
        let parts = match kind {
            SceneKind::PlaneTranslation => vec![Part {
                shape: Shape::Slab {
                    center: Point3::new(0.0, 0.0, 0.5),
                    half: Vector3::new(0.7, 0.7, 0.05),
                },
                motion: RigidMotion::Translate(Vector3::new(0.25, 0.125, 0.0)),
                texture,
            }],
            SceneKind::PlaneRigid => vec![Part {
                shape: Shape::Slab {
                    center: Point3::new(0.0, 0.0, 0.5),
                    half: Vector3::new(0.7, 0.7, 0.05),
                },
                motion: RigidMotion::Rotate {
                    center: Point3::new(0.0, 0.0, 0.5),
                    axis: Unit::new_normalize(Vector3::z()),
                    omega: 0.5,
                    drift: Vector3::new(0.125, 0.0, 0.0),
                },
                texture,
            }],
            SceneKind::OrbitingSphere => vec![
                Part {
                    shape: Shape::Slab {
                        center: Point3::new(0.0, 0.0, 0.85),
                        half: Vector3::new(1.0, 1.0, 0.05),
                    },
                    motion: RigidMotion::Static,
                    texture,
                },
                Part {
                    shape: Shape::Sphere {
                        center: Point3::new(0.0, 0.0, -0.15),
                        radius: 0.25,
                    },
                    // Orbit about (0, 0, 0.3): in front of the backdrop at
                    // t = 0, off to the side by t = 0.25.
                    motion: RigidMotion::Rotate {
                        center: Point3::new(0.0, 0.0, 0.3),
                        axis: Unit::new_normalize(Vector3::y()),
                        omega: 2.0 * std::f64::consts::PI,
                        drift: Vector3::zeros(),
                    },
                    texture: Texture::Solid([0.85, 0.6, 0.2]),
                },
            ],
            SceneKind::TwoPartArticulated => vec![
                Part {
                    shape: Shape::Slab {
                        center: Point3::new(-0.45, 0.0, 0.5),
                        half: Vector3::new(0.4, 0.6, 0.05),
                    },
                    motion: RigidMotion::Translate(Vector3::new(-0.125, 0.25, 0.0)),
                    texture: texture.clone(),
                },
                Part {
                    shape: Shape::Slab {
                        center: Point3::new(0.45, 0.0, 0.5),
                        half: Vector3::new(0.4, 0.6, 0.05),
                    },
                    motion: RigidMotion::Rotate {
                        center: Point3::new(0.45, 0.0, 0.5),
                        axis: Unit::new_normalize(Vector3::z()),
                        omega: 0.4,
                        drift: Vector3::zeros(),
                    },
                    texture,
                },
            ],
        };
        AnalyticScene { parts, bounds }
    }

    /// The monocular camera every synthetic sequence is rendered from:
    /// outside the bounds at z = -2.2, looking at the origin.
    pub fn default_camera(width: usize, height: usize) -> Camera {
        let focal = 0.9 * width as f64;
        Camera::look_at(
            width,
            height,
            focal,
            Point3::new(0.0, 0.0, -2.2),
            Point3::origin(),
            Vector3::new(0.0, -1.0, 0.0),
        )
        .expect("fixed default camera is valid")
    }

    /// Part whose solid contains x at time t.
    pub fn part_containing(&self, x: &Point3<f64>, t: f64) -> Option<usize> {
        self.parts.iter().position(|p| {
            let local = p.motion.pose(t).inverse_transform_point(x);
            p.shape.contains(&local)
        })
    }

    /// First surface the ray meets at time t: (part, ray parameter).
    pub fn raycast(&self, ray: &Ray, t: f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, part) in self.parts.iter().enumerate() {
            let inv = part.motion.pose(t).inverse();
            let local_ray = Ray {
                origin: inv.transform_point(&ray.origin),
                dir: Unit::new_unchecked(inv.transform_vector(ray.dir.as_ref())),
            };
            if let Some(tt) = part.shape.enter(&local_ray) {
                if best.is_none_or(|(_, bt)| tt < bt) {
                    best = Some((i, tt));
                }
            }
        }
        best
    }

    /// Exact rigid displacement of a material point from time t0 to t1.
    /// Points outside every part move with the part they are nearest to
    /// at t0 (measured at the shape in local coordinates).
    pub fn deform(&self, x: &Point3<f64>, t0: f64, t1: f64) -> Point3<f64> {
        let part = self
            .part_containing(x, t0)
            .unwrap_or_else(|| self.nearest_part(x, t0));
        let p = &self.parts[part];
        let local = p.motion.pose(t0).inverse_transform_point(x);
        p.motion.pose(t1).transform_point(&local)
    }

    fn nearest_part(&self, x: &Point3<f64>, t: f64) -> usize {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in self.parts.iter().enumerate() {
            let local = p.motion.pose(t).inverse_transform_point(x);
            let d = match &p.shape {
                Shape::Slab { center, half } => {
                    let d = local - center;
                    Vector3::new(
                        (d.x.abs() - half.x).max(0.0),
                        (d.y.abs() - half.y).max(0.0),
                        (d.z.abs() - half.z).max(0.0),
                    )
                    .norm()
                }
                Shape::Sphere { center, radius } => ((local - center).norm() - radius).max(0.0),
            };
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

impl DynamicField for AnalyticScene {
    fn query(&self, x: &Point3<f64>, t: f64) -> (f64, [f64; 3]) {
        for part in &self.parts {
            let local = part.motion.pose(t).inverse_transform_point(x);
            if part.shape.contains(&local) {
                let (u, v) = part.shape.uv(&local);
                return (SOLID_DENSITY, part.texture.sample(u, v));
            }
        }
        (0.0, [0.0; 3])
    }

    fn bounds(&self) -> Aabb {
        self.bounds
    }
}

impl DifferentiableField for AnalyticScene {
    /// Solid interiors and the empty exterior are locally constant, so both
    /// derivatives vanish wherever they exist; boundary points take the
    /// interior value with zero derivative. Image textures vary inside a
    /// part; they are treated as locally flat here, which is exact for the
    /// solid and checker textures these scenes normally carry.
    fn query_with_grad(
        &self,
        x: &Point3<f64>,
        t: f64,
    ) -> (f64, [f64; 3], Vector3<f64>, [Vector3<f64>; 3]) {
        let (density, color) = self.query(x, t);
        (density, color, Vector3::zeros(), [Vector3::zeros(); 3])
    }

    fn as_dynamic(&self) -> &dyn DynamicField {
        self
    }
}

/// Ground-truth optical flow of an analytic scene seen through a fixed
/// camera: raycast, carry the hit point rigidly, reproject.
pub struct AnalyticFlow<'a> {
    pub scene: &'a AnalyticScene,
    pub camera: &'a Camera,
}

impl FlowProvider for AnalyticFlow<'_> {
    fn flow(&self, pixel: [f64; 2], t0: f64, t1: f64) -> Option<[f64; 2]> {
        let ray = self.camera.ray_through(pixel);
        let (part, tt) = self.scene.raycast(&ray, t0)?;
        let x0 = ray.at(tt);
        let p = &self.scene.parts[part];
        let local = p.motion.pose(t0).inverse_transform_point(&x0);
        let x1 = p.motion.pose(t1).transform_point(&local);
        let (moved, _) = self.camera.project(&x1).ok()?;
        Some([moved[0] - pixel[0], moved[1] - pixel[1]])
    }
}
