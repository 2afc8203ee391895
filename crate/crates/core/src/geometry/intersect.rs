//! Ray-triangle intersection and the exhaustive mesh query.

use nalgebra::Point3;

use super::{Ray, TriMesh};

/// Rejection threshold for ray-triangle determinants (near-parallel).
pub const PARALLEL_EPS: f64 = 1e-9;

/// Tolerance under which two hit distances count as a tie; ties resolve
/// to the lowest face index so results are independent of face visit
/// order (BVH traversal must agree with the brute-force sweep).
pub const TIE_EPS: f64 = 1e-12;

/// Slack on the barycentric inequalities so rays through shared edges or
/// vertices register on every adjacent face and then tie-break.
const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub face: usize,
    /// Barycentric weights for the face's three vertices; sums to one.
    pub bary: [f64; 3],
}

impl Hit {
    /// Ordering rule shared by every intersection path.
    pub fn better_than(&self, other: &Hit) -> bool {
        self.t < other.t - TIE_EPS || (self.t <= other.t + TIE_EPS && self.face < other.face)
    }
}

/// Moller-Trumbore. Returns (t, u, v) with u, v the barycentric weights
/// of the second and third vertex.
pub fn ray_triangle(
    ray: &Ray,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < PARALLEL_EPS {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(&p) * inv;
    if !(-EDGE_EPS..=1.0 + EDGE_EPS).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = ray.dir.dot(&q) * inv;
    if v < -EDGE_EPS || u + v > 1.0 + EDGE_EPS {
        return None;
    }
    let t = e2.dot(&q) * inv;
    if t <= 0.0 {
        return None;
    }
    Some((t, u, v))
}

/// Nearest hit by testing every face; the reference the BVH must match.
pub fn brute_force_intersect(mesh: &TriMesh, ray: &Ray, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (fi, _) in mesh.faces.iter().enumerate() {
        let [a, b, c] = mesh.face_vertices(fi);
        if let Some((t, u, v)) = ray_triangle(ray, &a, &b, &c) {
            if t > t_max {
                continue;
            }
            let hit = Hit {
                t,
                face: fi,
                bary: [1.0 - u - v, u, v],
            };
            if best.as_ref().is_none_or(|cur| hit.better_than(cur)) {
                best = Some(hit);
            }
        }
    }
    best
}
