//! Discrete differential geometry of one embedded slice: cotangent Laplacian,
//! mixed-Voronoi areas, mean curvature, edge metric, convexity and curvature
//! bounds.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, CsrPattern};
use crate::mesh::{Embedding, Vec3};

/// Below this norm the Laplacian of the embedding is treated as zero.
pub const LAPLACIAN_EPS: f64 = 1e-12;
/// Threshold on the dihedral indicator for strict convexity.
pub const CONVEXITY_TOL: f64 = 1e-10;

/// Per-vertex curvature data of a slice.
#[derive(Debug, Clone, Default)]
pub struct VertexData {
    /// Outward unit normal.
    pub normal: Vec<Vec3>,
    /// Scalar mean curvature, `|ΔF|`.
    pub mean_curvature: Vec<f64>,
    /// Discrete Laplace-Beltrami of the coordinate functions, `-H ν`.
    pub laplacian: Vec<Vec3>,
    /// Mixed-Voronoi lumped area.
    pub area: Vec<f64>,
}

impl VertexData {
    pub fn max_mean_curvature(&self) -> f64 {
        self.mean_curvature.iter().cloned().fold(0.0, f64::max)
    }
}

/// Cotangents of the three corner angles of triangle `t`.
pub fn cotangents<E: Embedding + ?Sized>(mesh: &E, t: usize) -> [f64; 3] {
    let p = mesh.corners(t);
    let mut c = [0.0; 3];
    for i in 0..3 {
        let u = p[(i + 1) % 3] - p[i];
        let v = p[(i + 2) % 3] - p[i];
        c[i] = u.dot(&v) / u.cross(&v).norm();
    }
    c
}

fn check_triangles<E: Embedding + ?Sized>(mesh: &E) -> Result<()> {
    for t in 0..mesh.topology().n_triangles() {
        let [a, b, c] = mesh.corners(t);
        let area = mesh.triangle_area(t);
        let scale = (b - a).norm_squared().max((c - a).norm_squared()).max((c - b).norm_squared());
        if !(area > 1e-14 * scale) {
            return Err(Error::Degenerate { triangle: t, area });
        }
    }
    Ok(())
}

/// Mixed-Voronoi vertex areas: Voronoi regions for non-obtuse triangles,
/// the half/quarter split for obtuse ones. They sum to the total area.
pub fn mixed_areas<E: Embedding + ?Sized>(mesh: &E) -> Vec<f64> {
    let topo = mesh.topology();
    let mut area = vec![0.0; topo.n_vertices()];
    for t in 0..topo.n_triangles() {
        let tri = topo.triangle(t);
        let p = mesh.corners(t);
        let cot = cotangents(mesh, t);
        let at = mesh.triangle_area(t);
        let obtuse = (0..3).find(|&i| cot[i] < 0.0);
        for i in 0..3 {
            let a = match obtuse {
                None => {
                    let j = (i + 1) % 3;
                    let k = (i + 2) % 3;
                    ((p[j] - p[i]).norm_squared() * cot[k] + (p[k] - p[i]).norm_squared() * cot[j]) / 8.0
                }
                Some(o) if o == i => at / 2.0,
                Some(_) => at / 4.0,
            };
            area[tri[i]] += a;
        }
    }
    area
}

/// Curvature data for any embedding; errors on degenerate triangles.
pub fn vertex_data<E: Embedding + ?Sized>(mesh: &E) -> Result<VertexData> {
    check_triangles(mesh)?;
    let topo = mesh.topology();
    let n = topo.n_vertices();
    let area = mixed_areas(mesh);
    let mut lap = vec![Vec3::zeros(); n];
    let mut area_normal = vec![Vec3::zeros(); n];
    for t in 0..topo.n_triangles() {
        let tri = topo.triangle(t);
        let p = mesh.corners(t);
        let cot = cotangents(mesh, t);
        let av = mesh.area_vector(t);
        for k in 0..3 {
            let (i, j) = ((k + 1) % 3, (k + 2) % 3);
            let w = 0.5 * cot[k];
            let d = p[j] - p[i];
            lap[tri[i]] += d * w;
            lap[tri[j]] -= d * w;
            area_normal[tri[k]] += av;
        }
    }
    let mut normal = Vec::with_capacity(n);
    let mut mean_curvature = Vec::with_capacity(n);
    for v in 0..n {
        lap[v] /= area[v];
        let h = lap[v].norm();
        mean_curvature.push(h);
        normal.push(if h > LAPLACIAN_EPS { -lap[v] / h } else { area_normal[v].normalize() });
    }
    Ok(VertexData { normal, mean_curvature, laplacian: lap, area })
}

/// Per-vertex `{ν, H, ΔF}`, bundled as [`VertexData`].
pub fn mean_curvature_data<E: Embedding + ?Sized>(mesh: &E) -> Result<VertexData> {
    vertex_data(mesh)
}

/// Area-weighted average of incident triangle normals.
pub fn area_weighted_normals<E: Embedding + ?Sized>(mesh: &E) -> Vec<Vec3> {
    let topo = mesh.topology();
    let mut out = vec![Vec3::zeros(); topo.n_vertices()];
    for t in 0..topo.n_triangles() {
        let av = mesh.area_vector(t);
        for &v in &topo.triangle(t) {
            out[v] += av;
        }
    }
    out.into_iter().map(|n| n.normalize()).collect()
}

/// Positive semidefinite cotangent stiffness `K`, with `Δf = -(K f) / a`.
pub fn stiffness<E: Embedding + ?Sized>(mesh: &E, pattern: &Arc<CsrPattern>) -> CsrMatrix {
    let mut k = CsrMatrix::zeros(pattern.clone());
    let vals = k.values_mut();
    for t in 0..mesh.topology().n_triangles() {
        let cot = cotangents(mesh, t);
        let s = pattern.triangle_slots(t);
        for c in 0..3 {
            let (i, j) = ((c + 1) % 3, (c + 2) % 3);
            let w = 0.5 * cot[c];
            vals[s[i][j]] -= w;
            vals[s[j][i]] -= w;
            vals[s[i][i]] += w;
            vals[s[j][j]] += w;
        }
    }
    k
}

/// Discrete metric: Euclidean edge lengths, aligned with `Topology::edges`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeMetric {
    pub lengths: Vec<f64>,
}

impl EdgeMetric {
    pub fn min(&self) -> f64 {
        self.lengths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.lengths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.lengths.iter().sum::<f64>() / self.lengths.len() as f64
    }

    /// Max/min edge ratio, used as the mesh quality measure.
    pub fn quality_ratio(&self) -> f64 {
        self.max() / self.min()
    }
}

pub fn edge_metric<E: Embedding + ?Sized>(mesh: &E) -> EdgeMetric {
    EdgeMetric {
        lengths: mesh.topology().edges().iter().map(|&[a, b]| (mesh.position(a) - mesh.position(b)).norm()).collect(),
    }
}

/// Worst edge length ratio over the mesh (cheaper than building the table).
pub fn quality_ratio<E: Embedding + ?Sized>(mesh: &E) -> f64 {
    edge_metric(mesh).quality_ratio()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Minimum over edges of the signed dihedral indicator.
    pub min_indicator: f64,
    /// Edge (vertex pair) attaining the minimum.
    pub worst_edge: [usize; 2],
    pub strictly_convex: bool,
}

/// Signed convexity indicator of every edge: the height of the opposite
/// vertex of the neighbouring triangle below the plane of the first one,
/// divided by its distance. Positive means locally convex.
pub fn convexity_indicators<E: Embedding + ?Sized>(mesh: &E) -> Vec<([usize; 2], f64)> {
    let topo = mesh.topology();
    let mut out = Vec::with_capacity(topo.edges().len());
    for t in 0..topo.n_triangles() {
        let tri = topo.triangle(t);
        let n1 = mesh.triangle_normal(t);
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            if a > b {
                continue;
            }
            let adj = topo.adjacent(t, k);
            let d = topo.triangle(adj.triangle)[(adj.edge + 2) % 3];
            let diff = mesh.position(d) - mesh.position(a);
            out.push(([a, b], -diff.dot(&n1) / diff.norm()));
        }
    }
    out
}

pub fn validate_convex_mesh<E: Embedding + ?Sized>(mesh: &E) -> Result<ConvexityReport> {
    check_triangles(mesh)?;
    let (worst_edge, min_indicator) = convexity_indicators(mesh)
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("mesh has edges");
    Ok(ConvexityReport { min_indicator, worst_edge, strictly_convex: min_indicator > CONVEXITY_TOL })
}

/// Angle defect `2π - Σ θ` at each vertex.
pub fn angle_defects<E: Embedding + ?Sized>(mesh: &E) -> Vec<f64> {
    let topo = mesh.topology();
    let mut defect = vec![2.0 * PI; topo.n_vertices()];
    for t in 0..topo.n_triangles() {
        let tri = topo.triangle(t);
        let p = mesh.corners(t);
        for i in 0..3 {
            let u = p[(i + 1) % 3] - p[i];
            let v = p[(i + 2) % 3] - p[i];
            defect[tri[i]] -= u.cross(&v).norm().atan2(u.dot(&v));
        }
    }
    defect
}

/// Discrete Gaussian curvature: angle defect over lumped area.
pub fn gaussian_curvature<E: Embedding + ?Sized>(mesh: &E) -> Vec<f64> {
    let area = mixed_areas(mesh);
    angle_defects(mesh).into_iter().zip(area).map(|(d, a)| d / a).collect()
}

/// Largest signed distance of `points` to the convex body bounded by `outer`
/// (maximum over triangle supporting planes). Negative means every point lies
/// strictly inside.
pub fn max_signed_distance<E: Embedding + ?Sized>(points: &[Vec3], outer: &E) -> f64 {
    let planes: Vec<(Vec3, Vec3)> =
        (0..outer.topology().n_triangles()).map(|t| (outer.triangle_normal(t), outer.corners(t)[0])).collect();
    points
        .iter()
        .map(|p| planes.iter().map(|(n, a)| n.dot(&(p - a))).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::NEG_INFINITY, f64::max)
}
