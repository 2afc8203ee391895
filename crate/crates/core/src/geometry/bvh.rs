//! Axis-aligned bounding boxes and a median-split BVH.
//!
//! The BVH stores only structure; queries take the mesh it was built
//! from. Invariant: both accelerated queries return exactly what the
//! brute-force sweeps return, including the tie-break rule.

use nalgebra::Point3;

use super::distance::closest_point_on_triangle;
use super::intersect::{ray_triangle, Hit, TIE_EPS};
use super::{Ray, TriMesh};

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.grow(&other.min);
        out.grow(&other.max);
        out
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from((self.min.coords + self.max.coords) * 0.5)
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    /// Parameter range where the ray overlaps the box, clipped to
    /// [t0, t1]; `None` when disjoint. Handles zero direction components
    /// through infinite slopes.
    pub fn ray_range(&self, ray: &Ray, t0: f64, t1: f64) -> Option<(f64, f64)> {
        let mut lo = t0;
        let mut hi = t1;
        for k in 0..3 {
            let inv = 1.0 / ray.dir[k];
            let mut a = (self.min[k] - ray.origin[k]) * inv;
            let mut b = (self.max[k] - ray.origin[k]) * inv;
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            if a.is_nan() || b.is_nan() {
                // Origin exactly on a face with a parallel direction.
                if ray.origin[k] < self.min[k] || ray.origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            lo = lo.max(a);
            hi = hi.min(b);
            if lo > hi {
                return None;
            }
        }
        Some((lo, hi))
    }

    /// Squared distance from a point to the box (zero inside).
    pub fn dist2(&self, p: &Point3<f64>) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let d = (self.min[k] - p[k]).max(0.0).max(p[k] - self.max[k]);
            d2 += d * d;
        }
        d2
    }
}

enum Node {
    Leaf {
        start: usize,
        count: usize,
        aabb: Aabb,
    },
    Inner {
        left: usize,
        right: usize,
        aabb: Aabb,
    },
}

/// Nearest point on a mesh, with the face it lies on.
#[derive(Debug, Clone, Copy)]
pub struct Nearest {
    pub dist: f64,
    pub face: usize,
    pub point: Point3<f64>,
}

pub struct Bvh {
    nodes: Vec<Node>,
    /// Face indices, permuted so each leaf owns a contiguous run.
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(mesh: &TriMesh) -> Self {
        let mut order: Vec<usize> = (0..mesh.faces.len()).collect();
        let boxes: Vec<Aabb> = (0..mesh.faces.len())
            .map(|f| {
                let [a, b, c] = mesh.face_vertices(f);
                let mut bb = Aabb::empty();
                bb.grow(&a);
                bb.grow(&b);
                bb.grow(&c);
                bb
            })
            .collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            let n = order.len();
            Self::split(&mut nodes, &mut order, &boxes, 0, n);
        }
        Self { nodes, order }
    }

    fn split(
        nodes: &mut Vec<Node>,
        order: &mut [usize],
        boxes: &[Aabb],
        start: usize,
        count: usize,
    ) -> usize {
        let slice = &mut order[..];
        let mut aabb = Aabb::empty();
        for &f in slice[..count].iter() {
            aabb = aabb.union(&boxes[f]);
        }
        let idx = nodes.len();
        if count <= LEAF_SIZE {
            nodes.push(Node::Leaf { start, count, aabb });
            return idx;
        }
        // Split on the widest centroid axis at the median; fall back to a
        // leaf when all centroids coincide.
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &f in slice[..count].iter() {
            let c = boxes[f].center();
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap())
            .unwrap();
        if hi[axis] - lo[axis] <= 0.0 {
            nodes.push(Node::Leaf { start, count, aabb });
            return idx;
        }
        let mid = count / 2;
        slice[..count].select_nth_unstable_by(mid, |&a, &b| {
            let ca = boxes[a].center()[axis];
            let cb = boxes[b].center()[axis];
            ca.partial_cmp(&cb).unwrap().then(a.cmp(&b))
        });
        nodes.push(Node::Inner {
            left: 0,
            right: 0,
            aabb,
        });
        let (head, tail) = order.split_at_mut(mid);
        let left = Self::split(nodes, head, boxes, start, mid);
        let right = Self::split(nodes, tail, boxes, start + mid, count - mid);
        if let Node::Inner {
            left: l, right: r, ..
        } = &mut nodes[idx]
        {
            *l = left;
            *r = right;
        }
        idx
    }

    /// Nearest intersection within `t_max`; agrees exactly with
    /// [`brute_force_intersect`](super::brute_force_intersect).
    pub fn intersect(&self, mesh: &TriMesh, ray: &Ray, t_max: f64) -> Option<Hit> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Hit> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let (aabb, node) = match &self.nodes[ni] {
                Node::Leaf { aabb, .. } => (aabb, &self.nodes[ni]),
                Node::Inner { aabb, .. } => (aabb, &self.nodes[ni]),
            };
            let cutoff = best.as_ref().map_or(t_max, |h| h.t + TIE_EPS).min(t_max);
            let Some((lo, _)) = aabb.ray_range(ray, 0.0, cutoff) else {
                continue;
            };
            if lo > cutoff {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for &fi in &self.order[*start..*start + *count] {
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
                }
                Node::Inner { left, right, .. } => {
                    // Push far child first so the near child pops first.
                    let order_lr = self.child_order(ray, *left, *right);
                    stack.push(order_lr.1);
                    stack.push(order_lr.0);
                }
            }
        }
        best
    }

    fn child_order(&self, ray: &Ray, left: usize, right: usize) -> (usize, usize) {
        let c = |ni: usize| match &self.nodes[ni] {
            Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => {
                (aabb.center() - ray.origin).dot(&ray.dir)
            }
        };
        if c(left) <= c(right) {
            (left, right)
        } else {
            (right, left)
        }
    }

    /// Closest point on the mesh; agrees with the brute-force sweep.
    /// Lower face index wins exact distance ties.
    pub fn nearest(&self, mesh: &TriMesh, p: &Point3<f64>) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<Nearest> = None;
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let aabb = match &self.nodes[ni] {
                Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => aabb,
            };
            if let Some(b) = &best {
                if aabb.dist2(p) > b.dist * b.dist {
                    continue;
                }
            }
            match &self.nodes[ni] {
                Node::Leaf { start, count, .. } => {
                    for &fi in &self.order[*start..*start + *count] {
                        let [a, b, c] = mesh.face_vertices(fi);
                        let q = closest_point_on_triangle(p, &a, &b, &c);
                        let d = (q - p).norm();
                        let better = match &best {
                            None => true,
                            Some(cur) => {
                                d < cur.dist || (d == cur.dist && fi < cur.face)
                            }
                        };
                        if better {
                            best = Some(Nearest {
                                dist: d,
                                face: fi,
                                point: q,
                            });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = match &self.nodes[*left] {
                        Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => aabb.dist2(p),
                    };
                    let dr = match &self.nodes[*right] {
                        Node::Leaf { aabb, .. } | Node::Inner { aabb, .. } => aabb.dist2(p),
                    };
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}

/// Exhaustive nearest-point query, the reference for [`Bvh::nearest`].
pub fn brute_force_nearest(mesh: &TriMesh, p: &Point3<f64>) -> Option<Nearest> {
    let mut best: Option<Nearest> = None;
    for fi in 0..mesh.faces.len() {
        let [a, b, c] = mesh.face_vertices(fi);
        let q = closest_point_on_triangle(p, &a, &b, &c);
        let d = (q - p).norm();
        let better = match &best {
            None => true,
            Some(cur) => d < cur.dist || (d == cur.dist && fi < cur.face),
        };
        if better {
            best = Some(Nearest {
                dist: d,
                face: fi,
                point: q,
            });
        }
    }
    best
}
