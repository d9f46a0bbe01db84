//! Indexed triangle surfaces, file I/O, nearest-point acceleration and
//! per-vertex distance maps.

mod bvh;
mod distance;
pub mod io;

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::se3::RigidTransform;

pub use bvh::{closest_point_on_triangle, ClosestHit, Feature, SpatialIndex};
pub use distance::{
    distance_map, map_stats, weighted_aggregate, DistanceMap, DistanceMapOptions, MapStats,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("mesh has no triangles")]
    NoTriangles,
    #[error("triangle {triangle} references vertex {index} (mesh has {count})")]
    IndexOutOfRange { triangle: usize, index: u64, count: usize },
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFiniteVertex(usize),
    #[error("normal count {normals} does not match vertex count {vertices}")]
    NormalCount { normals: usize, vertices: usize },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("distance map is empty (no valid vertices)")]
    EmptyMap,
    #[error("no statistics to aggregate")]
    EmptyInput,
    #[error("invalid aggregate input: {0}")]
    InvalidStats(String),
}

impl MeshError {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        MeshError::Parse {
            offset,
            message: message.into(),
        }
    }
}

/// Indexed triangle surface in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    name: String,
    vertices: Vec<Point3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Option<Vec<Vector3<f64>>>,
}

fn is_degenerate(v: &[Point3<f64>], t: &[u32; 3]) -> bool {
    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
        return true;
    }
    let (a, b, c) = (v[t[0] as usize], v[t[1] as usize], v[t[2] as usize]);
    let (ab, ac, bc) = (b - a, c - a, c - b);
    let longest = ab.norm_squared().max(ac.norm_squared()).max(bc.norm_squared());
    ab.cross(&ac).norm() <= 1e-14 * longest
}

impl TriangleMesh {
    /// Validates indices and drops zero-area triangles (logged).
    pub fn new(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        Self::new_counting(vertices, triangles).map(|(m, _)| m)
    }

    /// Like [`TriangleMesh::new`], also returning how many triangles were dropped.
    pub fn new_counting(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
    ) -> Result<(Self, usize), MeshError> {
        if vertices.len() < 3 {
            return Err(MeshError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|p| !p.coords.iter().all(|x| x.is_finite())) {
            return Err(MeshError::NonFiniteVertex(i));
        }
        let count = vertices.len();
        for (ti, t) in triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&i| i as usize >= count) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: ti,
                    index: bad as u64,
                    count,
                });
            }
        }
        let before = triangles.len();
        let triangles: Vec<[u32; 3]> = triangles
            .into_iter()
            .filter(|t| !is_degenerate(&vertices, t))
            .collect();
        let dropped = before - triangles.len();
        if dropped > 0 {
            log::warn!("dropped {dropped} degenerate triangle(s)");
        }
        Ok((
            TriangleMesh {
                name: String::from("mesh"),
                vertices,
                triangles,
                normals: None,
            },
            dropped,
        ))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_normals(mut self, normals: Vec<Vector3<f64>>) -> Result<Self, MeshError> {
        if normals.len() != self.vertices.len() {
            return Err(MeshError::NormalCount {
                normals: normals.len(),
                vertices: self.vertices.len(),
            });
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, i: usize) -> [Point3<f64>; 3] {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    /// Unit face normal from the winding order (right-hand rule).
    pub fn face_normal(&self, i: usize) -> Vector3<f64> {
        let [a, b, c] = self.triangle(i);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|i| {
                let [a, b, c] = self.triangle(i);
                0.5 * (b - a).cross(&(c - a)).norm()
            })
            .sum()
    }

    pub fn centroid(&self) -> Point3<f64> {
        let sum = self
            .vertices
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / self.vertices.len() as f64)
    }

    /// Every vertex mapped by `t`; normals rotated; connectivity unchanged.
    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(|p| t.apply(p)).collect(),
            triangles: self.triangles.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.apply_vector(n)).collect()),
        }
    }

    /// Same surface with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            name: self.name.clone(),
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| -n).collect()),
        }
    }

    /// Concatenates two meshes into one vertex/triangle list.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(other.triangles.iter().map(|t| t.map(|i| i + offset)));
        TriangleMesh {
            name: format!("{}+{}", self.name, other.name),
            vertices,
            triangles,
            normals: None,
        }
    }

    /// Keeps the triangles whose three vertices pass `keep`; unused vertices
    /// are removed and indices compacted.
    pub fn filter_vertices(&self, keep: impl Fn(usize, &Point3<f64>) -> bool) -> Option<TriangleMesh> {
        let flags: Vec<bool> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, p)| keep(i, p))
            .collect();
        let kept: Vec<[u32; 3]> = self
            .triangles
            .iter()
            .filter(|t| t.iter().all(|&i| flags[i as usize]))
            .copied()
            .collect();
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut normals = self.normals.as_ref().map(|_| Vec::new());
        for t in &kept {
            for &i in t {
                if remap[i as usize] == u32::MAX {
                    remap[i as usize] = vertices.len() as u32;
                    vertices.push(self.vertices[i as usize]);
                    if let (Some(out), Some(src)) = (normals.as_mut(), self.normals.as_ref()) {
                        out.push(src[i as usize]);
                    }
                }
            }
        }
        if vertices.len() < 3 || kept.is_empty() {
            return None;
        }
        let triangles = kept.iter().map(|t| t.map(|i| remap[i as usize])).collect();
        Some(TriangleMesh {
            name: self.name.clone(),
            vertices,
            triangles,
            normals,
        })
    }

    /// Area-weighted vertex normals from the winding order.
    pub fn compute_vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut acc = vec![Vector3::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let (a, b, c) = (
                self.vertices[t[0] as usize],
                self.vertices[t[1] as usize],
                self.vertices[t[2] as usize],
            );
            let n = (b - a).cross(&(c - a));
            for &i in t {
                acc[i as usize] += n;
            }
        }
        acc.into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 0.0 {
                    n / len
                } else {
                    n
                }
            })
            .collect()
    }

    /// Every undirected edge borders exactly two triangles, traversed in
    /// opposite directions.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = Point3::from(Vector3::repeat(f64::INFINITY));
        let mut hi = Point3::from(Vector3::repeat(f64::NEG_INFINITY));
        for p in &self.vertices {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }
}

#[cfg(test)]
pub(crate) mod test_meshes {
    use super::*;

    /// Axis-aligned unit cube, outward winding.
    pub fn unit_cube() -> TriangleMesh {
        let v = (0..8)
            .map(|i| Point3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let t = vec![
            [0, 2, 1], [1, 2, 3], // z = 0
            [4, 5, 6], [5, 7, 6], // z = 1
            [0, 1, 4], [1, 5, 4], // y = 0
            [2, 6, 3], [3, 6, 7], // y = 1
            [0, 4, 2], [2, 4, 6], // x = 0
            [1, 3, 5], [3, 7, 5], // x = 1
        ];
        TriangleMesh::new(v, t).unwrap()
    }

    /// Icosphere of radius `r`, outward winding.
    pub fn sphere(r: f64, subdivisions: usize) -> TriangleMesh {
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut v: Vec<Vector3<f64>> = [
            (-1.0, p, 0.0), (1.0, p, 0.0), (-1.0, -p, 0.0), (1.0, -p, 0.0),
            (0.0, -1.0, p), (0.0, 1.0, p), (0.0, -1.0, -p), (0.0, 1.0, -p),
            (p, 0.0, -1.0), (p, 0.0, 1.0), (-p, 0.0, -1.0), (-p, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vector3::new(x, y, z).normalize())
        .collect();
        let mut f: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
            let mut next = Vec::with_capacity(f.len() * 4);
            let mut midpoint = |a: u32, b: u32, v: &mut Vec<Vector3<f64>>| {
                *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a as usize] + v[b as usize]) * 0.5).normalize());
                    (v.len() - 1) as u32
                })
            };
            for t in &f {
                let ab = midpoint(t[0], t[1], &mut v);
                let bc = midpoint(t[1], t[2], &mut v);
                let ca = midpoint(t[2], t[0], &mut v);
                next.extend_from_slice(&[[t[0], ab, ca], [t[1], bc, ab], [t[2], ca, bc], [ab, bc, ca]]);
            }
            f = next;
        }
        TriangleMesh::new(v.into_iter().map(|x| Point3::from(x * r)).collect(), f).unwrap()
    }

    /// Flat square plate at height `z`, `n`×`n` quads, normal +z.
    pub fn plate(size: f64, n: usize, z: f64) -> TriangleMesh {
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Point3::new(
                    size * (i as f64 / n as f64 - 0.5),
                    size * (j as f64 / n as f64 - 0.5),
                    z,
                ));
            }
        }
        let mut t = Vec::new();
        let w = (n + 1) as u32;
        for j in 0..n as u32 {
            for i in 0..n as u32 {
                let a = j * w + i;
                t.push([a, a + 1, a + w + 1]);
                t.push([a, a + w + 1, a + w]);
            }
        }
        TriangleMesh::new(v, t).unwrap()
    }
}
