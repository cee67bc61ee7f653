//! Triangle-mesh containers: connectivity, embedded slices, and intrinsic points.
//!
//! A [`Topology`] is shared (behind an `Arc`) by every time slice of a flow; only
//! vertex positions change. Geometry routines are written against the
//! [`Embedding`] trait so they run both on owned meshes and on interpolated
//! views into a trajectory.

pub mod builtin;
pub mod io;

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, VertexData};

pub type Vec3 = Vector3<f64>;

/// Tolerance on barycentric coordinates.
pub const BARY_TOL: f64 = 1e-12;

/// Reference to the triangle across one edge: `(triangle, local edge index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Adjacent {
    pub triangle: usize,
    pub edge: usize,
}

/// Connectivity of a closed, consistently oriented triangle mesh.
///
/// Local edge `k` of triangle `t` runs from `triangles[t][k]` to
/// `triangles[t][(k + 1) % 3]`; it is opposite local vertex `(k + 2) % 3`.
#[derive(Debug, Clone)]
pub struct Topology {
    triangles: Vec<[usize; 3]>,
    n_vertices: usize,
    adjacency: Vec<[Adjacent; 3]>,
    rings: Vec<Vec<usize>>,
    edges: Vec<[usize; 2]>,
}

impl Topology {
    pub fn new(n_vertices: usize, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::NonManifold("no triangles".into()));
        }
        let mut directed: HashMap<(usize, usize), (usize, usize)> =
            HashMap::with_capacity(triangles.len() * 3);
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n_vertices) {
                return Err(Error::NonManifold(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::NonManifold(format!("triangle {t} repeats a vertex")));
            }
            for k in 0..3 {
                let key = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(key, (t, k)).is_some() {
                    return Err(Error::NonManifold(format!(
                        "directed edge {key:?} used twice (edge shared by more than two triangles or inconsistent orientation)"
                    )));
                }
            }
        }
        let mut adjacency = Vec::with_capacity(triangles.len());
        let mut edges = Vec::with_capacity(triangles.len() * 3 / 2);
        for tri in &triangles {
            let mut adj = [Adjacent { triangle: 0, edge: 0 }; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let &(t2, k2) = directed.get(&(b, a)).ok_or_else(|| {
                    Error::NonManifold(format!("edge ({a}, {b}) is a boundary edge"))
                })?;
                adj[k] = Adjacent { triangle: t2, edge: k2 };
                if a < b {
                    edges.push([a, b]);
                }
            }
            adjacency.push(adj);
        }

        let mut incident = vec![0usize; n_vertices];
        let mut first = vec![usize::MAX; n_vertices];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                incident[v] += 1;
                if first[v] == usize::MAX {
                    first[v] = t;
                }
            }
        }
        let mut rings = Vec::with_capacity(n_vertices);
        for v in 0..n_vertices {
            if incident[v] == 0 {
                return Err(Error::NonManifold(format!("vertex {v} is isolated")));
            }
            let mut ring = Vec::with_capacity(incident[v]);
            let mut t = first[v];
            loop {
                ring.push(t);
                let i = local_index(&triangles[t], v).expect("vertex in ring triangle");
                t = adjacency[t][(i + 2) % 3].triangle;
                if t == first[v] || ring.len() > incident[v] {
                    break;
                }
            }
            if ring.len() != incident[v] {
                return Err(Error::NonManifold(format!("vertex {v} is not a manifold vertex")));
            }
            rings.push(ring);
        }
        Ok(Self { triangles, n_vertices, adjacency, rings, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    /// The triangle across local edge `k` of `t`.
    pub fn adjacent(&self, t: usize, k: usize) -> Adjacent {
        self.adjacency[t][k]
    }

    /// Triangles around `v`, in cyclic order.
    pub fn ring(&self, v: usize) -> &[usize] {
        &self.rings[v]
    }

    /// Undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Local edge index of `t` shared with `other`, if adjacent.
    pub fn shared_edge(&self, t: usize, other: usize) -> Option<usize> {
        (0..3).find(|&k| self.adjacency[t][k].triangle == other)
    }
}

pub(crate) fn local_index(tri: &[usize; 3], v: usize) -> Option<usize> {
    tri.iter().position(|&w| w == v)
}

/// Read access to an embedded triangle mesh.
pub trait Embedding {
    fn topology(&self) -> &Topology;
    fn position(&self, v: usize) -> Vec3;

    fn corners(&self, t: usize) -> [Vec3; 3] {
        let tri = self.topology().triangle(t);
        [self.position(tri[0]), self.position(tri[1]), self.position(tri[2])]
    }

    /// Unnormalized normal; its length is twice the triangle area.
    fn area_vector(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    fn triangle_normal(&self, t: usize) -> Vec3 {
        self.area_vector(t).normalize()
    }

    fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.area_vector(t).norm()
    }

    fn point_position(&self, p: &SurfacePoint) -> Vec3 {
        let c = self.corners(p.triangle);
        c[0] * p.bary[0] + c[1] * p.bary[1] + c[2] * p.bary[2]
    }

    fn positions(&self) -> Vec<Vec3> {
        (0..self.topology().n_vertices()).map(|v| self.position(v)).collect()
    }
}

/// One embedded time slice with cached per-vertex curvature data.
#[derive(Debug, Clone)]
pub struct TriangulatedHypersurface {
    topology: Arc<Topology>,
    positions: Vec<Vec3>,
    data: VertexData,
}

impl TriangulatedHypersurface {
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let topology = Arc::new(Topology::new(positions.len(), triangles)?);
        Self::with_topology(topology, positions)
    }

    /// Builds a slice that reuses existing connectivity.
    pub fn with_topology(topology: Arc<Topology>, positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() != topology.n_vertices() {
            return Err(Error::BadParams(format!(
                "{} positions for {} vertices",
                positions.len(),
                topology.n_vertices()
            )));
        }
        if let Some(bad) = positions.iter().position(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::BadParams(format!("vertex {bad} has a non-finite coordinate")));
        }
        let data = geometry::vertex_data(&RawEmbedding { topology: &topology, positions: &positions })?;
        Ok(Self { topology, positions, data })
    }

    pub fn topology_arc(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn vertex_positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    /// Cached normals, mean curvatures, Laplacian of the embedding and lumped areas.
    pub fn vertex_data(&self) -> &VertexData {
        &self.data
    }

    pub fn total_area(&self) -> f64 {
        (0..self.topology.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_topology(self.topology.clone(), self.positions.iter().map(|p| p * factor).collect())
    }

    /// Largest distance between two vertices.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                best = best.max((a - b).norm_squared());
            }
        }
        best.sqrt()
    }

    pub fn centroid(&self) -> Vec3 {
        let a = &self.data.area;
        let total: f64 = a.iter().sum();
        self.positions.iter().zip(a).map(|(p, w)| p * *w).sum::<Vec3>() / total
    }
}

impl Embedding for TriangulatedHypersurface {
    fn topology(&self) -> &Topology {
        &self.topology
    }

    fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }

    fn positions(&self) -> Vec<Vec3> {
        self.positions.clone()
    }
}

/// Borrowed positions over a topology, used before a slice is fully built.
pub struct RawEmbedding<'a> {
    pub topology: &'a Topology,
    pub positions: &'a [Vec3],
}

impl Embedding for RawEmbedding<'_> {
    fn topology(&self) -> &Topology {
        self.topology
    }

    fn position(&self, v: usize) -> Vec3 {
        self.positions[v]
    }
}

/// Intrinsic location on the mesh: triangle plus barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub triangle: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    /// Validates and renormalizes barycentric coordinates.
    pub fn new(triangle: usize, bary: [f64; 3]) -> Result<Self> {
        if bary.iter().any(|b| !b.is_finite() || *b < -1e-9 || *b > 1.0 + 1e-9) {
            return Err(Error::BadParams(format!("barycentric coordinates {bary:?} out of range")));
        }
        let sum: f64 = bary.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::BadParams(format!("barycentric coordinates {bary:?} do not sum to 1")));
        }
        Ok(Self::normalized(triangle, bary))
    }

    /// Clamps small negative components and rescales to sum one.
    pub(crate) fn normalized(triangle: usize, bary: [f64; 3]) -> Self {
        let b = bary.map(|x| x.max(0.0));
        let s: f64 = b.iter().sum();
        Self { triangle, bary: b.map(|x| x / s) }
    }

    /// The point sitting exactly on local vertex `i` of `triangle`.
    pub fn at_corner(triangle: usize, i: usize) -> Self {
        let mut bary = [0.0; 3];
        bary[i] = 1.0;
        Self { triangle, bary }
    }

    /// A point on vertex `v` expressed in the first triangle of its ring.
    pub fn at_vertex(topology: &Topology, v: usize) -> Self {
        let t = topology.ring(v)[0];
        let i = local_index(&topology.triangle(t), v).expect("ring triangle contains vertex");
        Self::at_corner(t, i)
    }

    pub fn centroid(triangle: usize) -> Self {
        Self { triangle, bary: [1.0 / 3.0; 3] }
    }

    pub fn is_valid(&self) -> bool {
        let s: f64 = self.bary.iter().sum();
        (s - 1.0).abs() <= BARY_TOL && self.bary.iter().all(|b| (0.0..=1.0).contains(b))
    }
}

/// A tangent vector at a surface point, stored in ambient coordinates within
/// the plane of the base triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector {
    pub base: SurfacePoint,
    pub vector: Vec3,
}

impl TangentVector {
    /// Projects `vector` onto the plane of the base triangle.
    pub fn new<E: Embedding + ?Sized>(mesh: &E, base: SurfacePoint, vector: Vec3) -> Self {
        let n = mesh.triangle_normal(base.triangle);
        Self { base, vector: vector - n * n.dot(&vector) }
    }

    pub fn norm(&self) -> f64 {
        self.vector.norm()
    }
}

/// Orthonormal basis of the plane of triangle `t`.
pub fn triangle_frame<E: Embedding + ?Sized>(mesh: &E, t: usize) -> [Vec3; 2] {
    let [a, b, _] = mesh.corners(t);
    let n = mesh.triangle_normal(t);
    let e1 = (b - a).normalize();
    [e1, n.cross(&e1)]
}
