use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::{MeshError, TriangleMesh};

const LEAF_SIZE: usize = 4;

/// Which part of a triangle a closest point lies on. Indices are local:
/// vertex `k`, or edge `k` between local vertices `k` and `k + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feature {
    Vertex(u8),
    Edge(u8),
    Face,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosestHit {
    pub point: Point3<f64>,
    pub distance: f64,
    pub triangle: usize,
    pub feature: Feature,
}

/// Exact closest point on triangle `abc` (Ericson, Real-Time Collision
/// Detection §5.1.5) with the feature it lies on.
pub fn closest_point_on_triangle(
    p: &Point3<f64>,
    a: &Point3<f64>,
    b: &Point3<f64>,
    c: &Point3<f64>,
) -> (Point3<f64>, Feature) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, Feature::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, Feature::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, Feature::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, Feature::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, Feature::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, Feature::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, Feature::Face)
}

#[derive(Clone, Copy, Debug)]
struct Aabb {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl Aabb {
    fn empty() -> Self {
        Aabb {
            min: Point3::from(Vector3::repeat(f64::INFINITY)),
            max: Point3::from(Vector3::repeat(f64::NEG_INFINITY)),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn distance_squared(&self, p: &Point3<f64>) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug)]
enum NodeKind {
    Inner { left: usize, right: usize },
    Leaf { start: usize, count: usize },
}

#[derive(Clone, Debug)]
struct Node {
    bounds: Aabb,
    kind: NodeKind,
}

/// Bounding-volume hierarchy over a mesh's triangles with angle-weighted
/// pseudo-normals for inside/outside classification.
#[derive(Clone, Debug)]
pub struct SpatialIndex {
    mesh: TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<u32>,
    face_normals: Vec<Vector3<f64>>,
    vertex_normals: Vec<Vector3<f64>>,
    edge_normals: Vec<[Vector3<f64>; 3]>,
    orientation_consistent: bool,
}

impl SpatialIndex {
    pub fn build(mesh: TriangleMesh) -> Result<Self, MeshError> {
        if mesh.triangle_count() == 0 {
            return Err(MeshError::NoTriangles);
        }
        let n = mesh.triangle_count();
        let centroids: Vec<Point3<f64>> = (0..n)
            .map(|i| {
                let [a, b, c] = mesh.triangle(i);
                Point3::from((a.coords + b.coords + c.coords) / 3.0)
            })
            .collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n / LEAF_SIZE + 1);
        build_node(&mesh, &centroids, &mut order, 0, n, &mut nodes);

        let (face_normals, vertex_normals, edge_normals, orientation_consistent) =
            pseudo_normals(&mesh);
        if !orientation_consistent {
            log::warn!(
                "mesh '{}' has inconsistent triangle winding; signed distances may be unreliable",
                mesh.name()
            );
        }
        Ok(SpatialIndex {
            mesh,
            nodes,
            order,
            face_normals,
            vertex_normals,
            edge_normals,
            orientation_consistent,
        })
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    /// False if some edge is traversed in the same direction by two triangles.
    pub fn orientation_consistent(&self) -> bool {
        self.orientation_consistent
    }

    /// Triangle ids per leaf, in tree order.
    pub fn leaves(&self) -> Vec<&[u32]> {
        self.nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Leaf { start, count } => Some(&self.order[start..start + count]),
                NodeKind::Inner { .. } => None,
            })
            .collect()
    }

    pub fn closest_point(&self, q: &Point3<f64>) -> ClosestHit {
        self.closest_within(q, f64::INFINITY)
            .expect("unbounded query on a nonempty index always hits")
    }

    /// Closest point no farther than `max_distance`, if any.
    pub fn closest_within(&self, q: &Point3<f64>, max_distance: f64) -> Option<ClosestHit> {
        let mut best_d2 = if max_distance.is_finite() {
            max_distance * max_distance
        } else {
            f64::INFINITY
        };
        let mut best: Option<ClosestHit> = None;
        let mut stack: Vec<(usize, f64)> = vec![(0, self.nodes[0].bounds.distance_squared(q))];
        while let Some((ni, d2)) = stack.pop() {
            if d2 > best_d2 {
                continue;
            }
            match self.nodes[ni].kind {
                NodeKind::Leaf { start, count } => {
                    for &ti in &self.order[start..start + count] {
                        let [a, b, c] = self.mesh.triangle(ti as usize);
                        let (p, feature) = closest_point_on_triangle(q, &a, &b, &c);
                        let d2 = (q - p).norm_squared();
                        let better = match best {
                            None => d2 <= best_d2,
                            Some(h) => d2 < best_d2 || (d2 == best_d2 && (ti as usize) < h.triangle),
                        };
                        if better {
                            best_d2 = d2;
                            best = Some(ClosestHit {
                                point: p,
                                distance: 0.0,
                                triangle: ti as usize,
                                feature,
                            });
                        }
                    }
                }
                NodeKind::Inner { left, right } => {
                    let dl = self.nodes[left].bounds.distance_squared(q);
                    let dr = self.nodes[right].bounds.distance_squared(q);
                    if dl <= dr {
                        stack.push((right, dr));
                        stack.push((left, dl));
                    } else {
                        stack.push((left, dl));
                        stack.push((right, dr));
                    }
                }
            }
        }
        best.map(|mut h| {
            h.distance = best_d2.sqrt();
            h
        })
    }

    /// Pseudo-normal of the feature a hit lies on.
    pub fn feature_normal(&self, hit: &ClosestHit) -> Vector3<f64> {
        let t = self.mesh.triangles()[hit.triangle];
        match hit.feature {
            Feature::Face => self.face_normals[hit.triangle],
            Feature::Edge(k) => self.edge_normals[hit.triangle][k as usize],
            Feature::Vertex(k) => self.vertex_normals[t[k as usize] as usize],
        }
    }

    /// Signed distance: positive outside the surface, negative inside.
    pub fn signed_distance(&self, q: &Point3<f64>) -> f64 {
        let hit = self.closest_point(q);
        self.sign_of(q, &hit) * hit.distance
    }

    pub(crate) fn sign_of(&self, q: &Point3<f64>, hit: &ClosestHit) -> f64 {
        if (q - hit.point).dot(&self.feature_normal(hit)) < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Exhaustive closest point over all triangles.
    pub fn brute_force_closest(&self, q: &Point3<f64>) -> ClosestHit {
        let mut best: Option<ClosestHit> = None;
        for i in 0..self.mesh.triangle_count() {
            let [a, b, c] = self.mesh.triangle(i);
            let (p, feature) = closest_point_on_triangle(q, &a, &b, &c);
            let d = (q - p).norm();
            if best.is_none_or(|h| d < h.distance) {
                best = Some(ClosestHit {
                    point: p,
                    distance: d,
                    triangle: i,
                    feature,
                });
            }
        }
        best.expect("nonempty mesh")
    }
}

fn build_node(
    mesh: &TriangleMesh,
    centroids: &[Point3<f64>],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &ti in &order[start..end] {
        for p in mesh.triangle(ti as usize) {
            bounds.grow(&p);
        }
        cbounds.grow(&centroids[ti as usize]);
    }
    let idx = nodes.len();
    let count = end - start;
    nodes.push(Node {
        bounds,
        kind: NodeKind::Leaf { start, count },
    });
    if count <= LEAF_SIZE {
        return idx;
    }
    let extent = cbounds.max - cbounds.min;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let mid = count / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build_node(mesh, centroids, order, start, start + mid, nodes);
    let right = build_node(mesh, centroids, order, start + mid, end, nodes);
    nodes[idx].kind = NodeKind::Inner { left, right };
    idx
}

type PseudoNormals = (Vec<Vector3<f64>>, Vec<Vector3<f64>>, Vec<[Vector3<f64>; 3]>, bool);

fn pseudo_normals(mesh: &TriangleMesh) -> PseudoNormals {
    let tris = mesh.triangles();
    let verts = mesh.vertices();
    let face: Vec<Vector3<f64>> = (0..tris.len()).map(|i| mesh.face_normal(i)).collect();

    let mut vertex = vec![Vector3::zeros(); verts.len()];
    for (ti, t) in tris.iter().enumerate() {
        for k in 0..3 {
            let p = verts[t[k] as usize];
            let e1 = (verts[t[(k + 1) % 3] as usize] - p).normalize();
            let e2 = (verts[t[(k + 2) % 3] as usize] - p).normalize();
            let angle = e1.dot(&e2).clamp(-1.0, 1.0).acos();
            vertex[t[k] as usize] += face[ti] * angle;
        }
    }
    for n in vertex.iter_mut() {
        let len = n.norm();
        if len > 0.0 {
            *n /= len;
        }
    }

    let mut incident: HashMap<(u32, u32), Vec<usize>> = HashMap::new();
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for (ti, t) in tris.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            incident.entry((a.min(b), a.max(b))).or_default().push(ti);
            *directed.entry((a, b)).or_default() += 1;
        }
    }
    let consistent = directed.values().all(|&n| n == 1);
    let edge = tris
        .iter()
        .map(|t| {
            std::array::from_fn(|k| {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let sum = incident[&(a.min(b), a.max(b))]
                    .iter()
                    .fold(Vector3::zeros(), |acc, &f| acc + face[f]);
                let len = sum.norm();
                if len > 0.0 {
                    sum / len
                } else {
                    sum
                }
            })
        })
        .collect();
    (face, vertex, edge, consistent)
}
