use std::sync::OnceLock;

use proptest::prelude::*;

use shrinkflow::brownian::GeneratorConvention;
use shrinkflow::coupling::{comparison_g, comparison_g_dot_jump, mirror_along};
use shrinkflow::density::{step_density, DensityField};
use shrinkflow::flow::{run_flow, FlowConfig, FlowTrajectory};
use shrinkflow::geodesic::{minimal_geodesic, parallel_transport, walk_straight, GeodesicPath};
use shrinkflow::mesh::builtin::{ellipsoid, icosphere};
use shrinkflow::mesh::{triangle_frame, Embedding, SurfacePoint, TangentVector, TriangulatedHypersurface, Vec3};

fn meshes() -> &'static [TriangulatedHypersurface; 2] {
    static M: OnceLock<[TriangulatedHypersurface; 2]> = OnceLock::new();
    M.get_or_init(|| [icosphere(2, 1.0).unwrap(), ellipsoid(1.0, 1.2, 0.8, 2).unwrap()])
}

fn small_trajectory() -> &'static FlowTrajectory {
    static T: OnceLock<FlowTrajectory> = OnceLock::new();
    T.get_or_init(|| run_flow(&icosphere(2, 1.0).unwrap(), &FlowConfig::new(1e-3, 0.1)).unwrap())
}

/// Both test meshes are level-2 subdivisions with 320 triangles.
const TRIANGLES: usize = 320;

fn point() -> impl Strategy<Value = SurfacePoint> {
    (0..TRIANGLES, 0.05..1.0f64, 0.05..1.0f64, 0.05..1.0f64).prop_map(|(t, a, b, c)| {
        let s = a + b + c;
        SurfacePoint::new(t, [a / s, b / s, c / s]).unwrap()
    })
}

fn geodesic(mesh: &TriangulatedHypersurface, x: &SurfacePoint, y: &SurfacePoint) -> Option<GeodesicPath> {
    minimal_geodesic(mesh, x, y).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geodesic_distance_is_symmetric(m in 0..2usize, x in point(), y in point()) {
        let mesh = &meshes()[m];
        let (Some(a), Some(b)) = (geodesic(mesh, &x, &y), geodesic(mesh, &y, &x)) else { return Ok(()) };
        prop_assert!((a.length - b.length).abs() <= 1e-9 * (1.0 + a.length));
        let chord = (mesh.point_position(&x) - mesh.point_position(&y)).norm();
        prop_assert!(a.length >= chord - 1e-12);
    }

    #[test]
    fn geodesic_distance_satisfies_triangle_inequality(m in 0..2usize, p in prop::collection::vec(point(), 3)) {
        let mesh = &meshes()[m];
        let (Some(xz), Some(xy), Some(yz)) =
            (geodesic(mesh, &p[0], &p[2]), geodesic(mesh, &p[0], &p[1]), geodesic(mesh, &p[1], &p[2])) else { return Ok(()) };
        prop_assert!(xz.length <= xy.length + yz.length + 1e-9);
    }

    #[test]
    fn straight_walk_retraces(m in 0..2usize, t in 0..TRIANGLES, angle in 0.0..std::f64::consts::TAU, len in 0.01..1.5f64) {
        let mesh = &meshes()[m];
        let p = SurfacePoint::centroid(t);
        let [e1, e2] = triangle_frame(mesh, p.triangle);
        let dir = e1 * angle.cos() + e2 * angle.sin();
        let out = walk_straight(mesh, &p, &dir, len, &mut []).unwrap();
        let back = walk_straight(mesh, &out.end, &-out.direction, len, &mut []).unwrap();
        prop_assert!((mesh.point_position(&back.end) - mesh.point_position(&p)).norm() <= 1e-9);
    }

    #[test]
    fn transport_preserves_inner_products(m in 0..2usize, x in point(), y in point(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let mesh = &meshes()[m];
        let Some(g) = geodesic(mesh, &x, &y) else { return Ok(()) };
        prop_assume!(g.length > 1e-6);
        let [e1, e2] = triangle_frame(mesh, x.triangle);
        let v = TangentVector::new(mesh, x, e1 * a + e2 * b);
        let w = parallel_transport(mesh, &g, &v).unwrap();
        let t = parallel_transport(mesh, &g, &TangentVector::new(mesh, x, g.start_tangent)).unwrap();
        prop_assert!((w.vector.norm() - v.vector.norm()).abs() <= 1e-10);
        prop_assert!((w.vector.dot(&t.vector) - v.vector.dot(&g.start_tangent)).abs() <= 1e-10);
        prop_assert!((t.vector - g.end_tangent).norm() <= 1e-9);
    }

    #[test]
    fn mirror_is_an_isometry_reversing_the_geodesic(m in 0..2usize, x in point(), y in point(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let mesh = &meshes()[m];
        let Some(g) = geodesic(mesh, &x, &y) else { return Ok(()) };
        prop_assume!(g.length > 1e-6);
        let [e1, e2] = triangle_frame(mesh, x.triangle);
        let v = TangentVector::new(mesh, x, e1 * a + e2 * b);
        let w = mirror_along(mesh, &g, &v).unwrap();
        prop_assert!((w.vector.norm() - v.vector.norm()).abs() <= 1e-10);
        prop_assert!(w.vector.dot(&mesh.triangle_normal(w.base.triangle)).abs() <= 1e-10);
        let e = mirror_along(mesh, &g, &TangentVector::new(mesh, x, g.start_tangent)).unwrap();
        prop_assert!((e.vector + g.end_tangent).norm() <= 1e-9);
    }

    #[test]
    fn comparison_jump_is_nonpositive(n in 2..7usize, eps in -0.9..0.9f64, frac in 0.01..0.99f64) {
        let mu = ((1.0 - eps) / (n as f64 - 1.0)).sqrt();
        let r = frac * std::f64::consts::PI / mu;
        prop_assert!(comparison_g_dot_jump(r, n, eps).unwrap() <= 0.0);
        prop_assert!((comparison_g(0.0, r, n, eps).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((comparison_g(r, r, n, eps).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!(comparison_g(0.5 * r, r, n, eps).unwrap() >= 1.0);
    }

    #[test]
    fn density_step_keeps_positivity_and_mass(values in prop::collection::vec(0.0..5.0f64, 162), dt in 1e-5..5e-3f64, f in 0.0..1.0f64) {
        let traj = small_trajectory();
        prop_assume!(values.iter().any(|v| *v > 0.0));
        let (lo, hi) = traj.backward_range();
        let u = lo + f * (hi - lo - dt);
        let h = DensityField::normalized(traj, u, values).unwrap();
        for conv in [GeneratorConvention::HALF, GeneratorConvention::ONE] {
            let next = step_density(traj, &h, dt, conv).unwrap();
            prop_assert!(next.min() >= -1e-12);
            prop_assert!((next.mass() - h.mass()).abs() <= 1e-9);
        }
    }
}

#[test]
fn comparison_boundary_rejects_out_of_domain() {
    assert!(comparison_g(-0.1, 1.0, 2, 0.0).is_err());
    assert!(comparison_g(1.1, 1.0, 2, 0.0).is_err());
    // Beyond the first conjugate radius the function is undefined.
    assert!(comparison_g(0.5, 4.0, 2, 0.0).is_err());
}

#[test]
fn transport_rejects_a_vector_based_elsewhere() {
    let mesh = &meshes()[0];
    let x = SurfacePoint::centroid(0);
    let y = SurfacePoint::centroid(50);
    let g = minimal_geodesic(mesh, &x, &y).unwrap();
    let v = TangentVector::new(mesh, SurfacePoint::centroid(7), Vec3::x());
    assert!(parallel_transport(mesh, &g, &v).is_err());
}
