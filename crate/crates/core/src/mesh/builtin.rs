//! Analytic reference surfaces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{TriangulatedHypersurface, Vec3};
use crate::error::{Error, Result};

pub const MAX_SUBDIVISION: u32 = 7;

/// Generator for the reference meshes used by the oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BuiltinMesh {
    Icosphere { subdiv: u32, radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64, subdiv: u32 },
}

impl BuiltinMesh {
    pub fn build(&self) -> Result<TriangulatedHypersurface> {
        match *self {
            BuiltinMesh::Icosphere { subdiv, radius } => icosphere(subdiv, radius),
            BuiltinMesh::Ellipsoid { a, b, c, subdiv } => ellipsoid(a, b, c, subdiv),
        }
    }

    /// Parses `icosphere:SUBDIV[:R]` or `ellipsoid:A,B,C[:SUBDIV]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse builtin mesh '{spec}'"));
        let mut parts = spec.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        match kind {
            "icosphere" | "sphere" => {
                let subdiv = parts.next().map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(3);
                let radius = parts.next().map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(1.0);
                Ok(BuiltinMesh::Icosphere { subdiv, radius })
            }
            "ellipsoid" => {
                let axes: Vec<f64> = parts
                    .next()
                    .ok_or_else(bad)?
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad())?;
                if axes.len() != 3 {
                    return Err(bad());
                }
                let subdiv = parts.next().map(str::parse).transpose().map_err(|_| bad())?.unwrap_or(3);
                Ok(BuiltinMesh::Ellipsoid { a: axes[0], b: axes[1], c: axes[2], subdiv })
            }
            _ => Err(bad()),
        }
    }
}

fn check_subdiv(subdiv: u32) -> Result<()> {
    if subdiv > MAX_SUBDIVISION {
        return Err(Error::BadParams(format!("subdivision {subdiv} exceeds {MAX_SUBDIVISION}")));
    }
    Ok(())
}

/// Unit-sphere vertices and triangles of the subdivided icosahedron.
///
/// Midpoint subdivision appends new vertices, so the vertices of level `k`
/// are a prefix of those of level `k + 1`.
pub fn icosphere_raw(subdiv: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vec3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(tris.len() * 4);
        for &[a, b, c] in &tris {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        tris = next;
    }
    (verts, tris)
}

/// Icosphere with `10 * 4^subdiv + 2` vertices, all at distance `radius`.
pub fn icosphere(subdiv: u32, radius: f64) -> Result<TriangulatedHypersurface> {
    check_subdiv(subdiv)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::BadParams(format!("radius {radius} must be positive")));
    }
    let (verts, tris) = icosphere_raw(subdiv);
    TriangulatedHypersurface::new(verts.into_iter().map(|v| v * radius).collect(), tris)
}

/// Axis-aligned ellipsoid: the icosphere scaled by `(a, b, c)`.
///
/// The affine image of a convex polyhedron is convex, so the mesh is convex.
pub fn ellipsoid(a: f64, b: f64, c: f64, subdiv: u32) -> Result<TriangulatedHypersurface> {
    check_subdiv(subdiv)?;
    if [a, b, c].iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::BadParams(format!("semi-axes ({a}, {b}, {c}) must be positive")));
    }
    let (verts, tris) = icosphere_raw(subdiv);
    TriangulatedHypersurface::new(
        verts.into_iter().map(|v| Vec3::new(a * v.x, b * v.y, c * v.z)).collect(),
        tris,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Embedding;

    #[test]
    fn icosahedron_has_twelve_vertices() {
        let m = icosphere(0, 1.0).unwrap();
        assert_eq!(m.n_vertices(), 12);
        assert_eq!(m.topology().n_triangles(), 20);
    }

    #[test]
    fn subdivision_counts_and_radius() {
        for k in 0..=4u32 {
            let m = icosphere(k, 1.0).unwrap();
            assert_eq!(m.n_vertices(), 10 * 4usize.pow(k) + 2);
            assert!(m.vertex_positions().iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn outward_orientation() {
        let m = icosphere(2, 1.0).unwrap();
        for t in 0..m.topology().n_triangles() {
            let c: Vec3 = m.corners(t).iter().sum::<Vec3>() / 3.0;
            assert!(m.triangle_normal(t).dot(&c) > 0.0);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(icosphere(8, 1.0).is_err());
        assert!(icosphere(2, 0.0).is_err());
        assert!(ellipsoid(1.0, -1.0, 1.0, 2).is_err());
    }

    #[test]
    fn parses_builtin_specs() {
        assert_eq!(
            BuiltinMesh::parse("icosphere:4").unwrap(),
            BuiltinMesh::Icosphere { subdiv: 4, radius: 1.0 }
        );
        assert_eq!(
            BuiltinMesh::parse("ellipsoid:1,1,1.5:3").unwrap(),
            BuiltinMesh::Ellipsoid { a: 1.0, b: 1.0, c: 1.5, subdiv: 3 }
        );
        assert!(BuiltinMesh::parse("torus:3").is_err());
    }
}
