//! Indexed triangle mesh with optional per-vertex color and opacity.

use nalgebra::Point3;

use super::{Aabb, GeometryError};

#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[usize; 3]>,
    pub colors: Option<Vec<[f64; 3]>>,
    pub opacities: Option<Vec<f64>>,
}

impl TriMesh {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for v in &self.vertices {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(GeometryError::BadMesh("non-finite vertex".into()));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            for &vi in f {
                if vi >= self.vertices.len() {
                    return Err(GeometryError::BadMesh(format!(
                        "face {i} references vertex {vi} of {}",
                        self.vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(GeometryError::BadMesh(format!("face {i} is degenerate")));
            }
        }
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return Err(GeometryError::BadMesh("color count mismatch".into()));
            }
        }
        if let Some(o) = &self.opacities {
            if o.len() != self.vertices.len() {
                return Err(GeometryError::BadMesh("opacity count mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn face_vertices(&self, face: usize) -> [Point3<f64>; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Edge-adjacent vertex lists, sorted and deduplicated per vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                nb[a].push(b);
                nb[b].push(a);
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in &self.vertices {
            b.grow(v);
        }
        b
    }

    /// Barycentric blend of a per-vertex attribute over one face.
    pub fn interpolate3(&self, attr: &[[f64; 3]], face: usize, bary: [f64; 3]) -> [f64; 3] {
        let [a, b, c] = self.faces[face];
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = bary[0] * attr[a][k] + bary[1] * attr[b][k] + bary[2] * attr[c][k];
        }
        out
    }

    pub fn interpolate1(&self, attr: &[f64], face: usize, bary: [f64; 3]) -> f64 {
        let [a, b, c] = self.faces[face];
        bary[0] * attr[a] + bary[1] * attr[b] + bary[2] * attr[c]
    }
}
