use shrinkflow::geometry::{angle_defects, validate_convex_mesh};
use shrinkflow::mesh::builtin::{ellipsoid, icosphere, BuiltinMesh};
use shrinkflow::mesh::io::{load_mesh, parse_obj, parse_off, save_off};
use shrinkflow::mesh::{Embedding, TriangulatedHypersurface, Vec3};
use shrinkflow::Error;

#[test]
fn icosphere_counts_and_radius() {
    for (k, v) in [(0, 12), (1, 42), (2, 162), (3, 642), (4, 2562)] {
        let m = icosphere(k, 1.0).unwrap();
        assert_eq!(m.n_vertices(), v);
        assert_eq!(m.topology().n_triangles(), 2 * v - 4);
        assert!(m.vertex_positions().iter().all(|p| (p.norm() - 1.0).abs() < 1e-14));
    }
    let m = icosphere(2, 0.5).unwrap();
    assert!(m.vertex_positions().iter().all(|p| (p.norm() - 0.5).abs() < 1e-14));
}

#[test]
fn builtin_meshes_are_strictly_convex_spheres() {
    for m in [icosphere(3, 1.0).unwrap(), ellipsoid(1.0, 1.0, 1.5, 3).unwrap(), ellipsoid(1.0, 1.2, 0.8, 3).unwrap()] {
        assert!(validate_convex_mesh(&m).unwrap().strictly_convex);
        // Gauss–Bonnet: the angle defects of a sphere sum to 4π.
        let total: f64 = angle_defects(&m).iter().sum();
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-10);
    }
    let e = ellipsoid(1.0, 1.2, 0.8, 2).unwrap();
    for p in e.vertex_positions() {
        let q = (p.x / 1.0).powi(2) + (p.y / 1.2).powi(2) + (p.z / 0.8).powi(2);
        assert!((q - 1.0).abs() < 1e-12);
    }
}

#[test]
fn builtin_descriptions_parse() {
    assert_eq!(BuiltinMesh::parse("icosphere:4").unwrap(), BuiltinMesh::Icosphere { subdiv: 4, radius: 1.0 });
    assert_eq!(BuiltinMesh::parse("icosphere:2:0.5").unwrap(), BuiltinMesh::Icosphere { subdiv: 2, radius: 0.5 });
    assert_eq!(
        BuiltinMesh::parse("ellipsoid:1,1,1.5:4").unwrap(),
        BuiltinMesh::Ellipsoid { a: 1.0, b: 1.0, c: 1.5, subdiv: 4 }
    );
    for bad in ["cube:3", "ellipsoid:1,2", "icosphere:x"] {
        assert!(matches!(BuiltinMesh::parse(bad), Err(Error::Config(_))), "{bad}");
    }
    assert!(icosphere(9, 1.0).is_err());
}

#[test]
fn off_round_trip_preserves_the_mesh() {
    let m = ellipsoid(1.0, 1.2, 0.8, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.off");
    save_off(&m, &p).unwrap();
    let back = load_mesh(&p).unwrap();
    assert_eq!(back.topology().triangles(), m.topology().triangles());
    for (a, b) in back.vertex_positions().iter().zip(m.vertex_positions()) {
        assert_eq!(a, b);
    }
}

#[test]
fn text_formats_parse() {
    let off = "OFF\n# tetrahedron\n4 4 0\n1 1 1\n1 -1 -1\n-1 1 -1\n-1 -1 1\n3 0 1 2\n3 0 3 1\n3 0 2 3\n3 1 3 2\n";
    let (v, t) = parse_off(off).unwrap();
    assert_eq!((v.len(), t.len()), (4, 4));
    let obj = "v 1 1 1\nv 1 -1 -1\nv -1 1 -1\nv -1 -1 1\nf 1 2 3\nf 1/1 4/4 2/2\nf 1 3 4\nf 2 4 3\n";
    let (v2, t2) = parse_obj(obj).unwrap();
    assert_eq!(v, v2);
    assert_eq!(t, t2);
    let tet = TriangulatedHypersurface::new(v, t).unwrap();
    assert!(validate_convex_mesh(&tet).unwrap().strictly_convex);
    assert!(parse_off("PLY\n").is_err());
    assert!(parse_off("OFF\n4 1 0\n0 0 0\n").is_err());
}

#[test]
fn invalid_meshes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.off");
    std::fs::write(&p, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    assert!(matches!(load_mesh(&p), Err(Error::NonManifold(_))));
    let q = dir.path().join("mesh.stl");
    std::fs::write(&q, "solid").unwrap();
    assert!(matches!(load_mesh(&q), Err(Error::Parse { .. })));

    // Pushing one vertex inward makes the surface non-convex.
    let m = icosphere(2, 1.0).unwrap();
    let mut p = m.vertex_positions().to_vec();
    p[0] *= 0.8;
    let dented = TriangulatedHypersurface::new(p, m.topology().triangles().to_vec()).unwrap();
    assert!(!validate_convex_mesh(&dented).unwrap().strictly_convex);

    // A collapsed triangle.
    let mut p = m.vertex_positions().to_vec();
    let [a, b, _] = m.topology().triangle(0);
    p[a] = p[b] + Vec3::new(1e-20, 0.0, 0.0);
    assert!(TriangulatedHypersurface::new(p, m.topology().triangles().to_vec()).is_err());
}
