use std::ffi::{CStr, CString};
use std::ptr;
use std::sync::OnceLock;

use shrinkflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sf_last_error()) }.to_string_lossy().into_owned()
}

struct Traj(*mut SfTrajectory);
unsafe impl Send for Traj {}
unsafe impl Sync for Traj {}

fn trajectory() -> *const SfTrajectory {
    static T: OnceLock<Traj> = OnceLock::new();
    T.get_or_init(|| unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(sf_mesh_icosphere(2, 1.0, &mut mesh), SfStatus::Ok);
        let mut traj = ptr::null_mut();
        assert_eq!(sf_flow_run(mesh, 5e-4, 0.02, &mut traj), SfStatus::Ok);
        sf_mesh_free(mesh);
        Traj(traj)
    })
    .0
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(sf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn mesh_queries() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(sf_mesh_ellipsoid(1.0, 1.2, 0.8, 2, &mut mesh), SfStatus::Ok);
        let n = sf_mesh_vertex_count(mesh);
        assert_eq!((n, sf_mesh_triangle_count(mesh)), (162, 320));
        let mut pos = vec![0.0; 3 * n];
        assert_eq!(sf_mesh_positions(mesh, pos.as_mut_ptr(), pos.len()), SfStatus::Ok);
        assert!(pos.chunks(3).all(|p| ((p[0] / 1.0).powi(2) + (p[1] / 1.2).powi(2) + (p[2] / 0.8).powi(2) - 1.0).abs() < 1e-12));
        let mut h = vec![0.0; n];
        assert_eq!(sf_mesh_mean_curvature(mesh, h.as_mut_ptr(), n), SfStatus::Ok);
        assert!(h.iter().all(|x| *x > 0.0));
        let (mut mi, mut sc) = (0.0, 0);
        assert_eq!(sf_mesh_convexity(mesh, &mut mi, &mut sc), SfStatus::Ok);
        assert_eq!(sc, 1);
        assert!(mi > 0.0);
        sf_mesh_free(mesh);
        sf_mesh_free(ptr::null_mut());
        assert_eq!(sf_mesh_vertex_count(ptr::null()), 0);
    }
}

#[test]
fn mesh_from_arrays_validates_input() {
    unsafe {
        let p = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0];
        let t: [u32; 12] = [0, 1, 2, 0, 3, 1, 0, 2, 3, 1, 3, 2];
        let mut mesh = ptr::null_mut();
        assert_eq!(sf_mesh_new(p.as_ptr(), 4, t.as_ptr(), 4, &mut mesh), SfStatus::Ok);
        assert_eq!(sf_mesh_vertex_count(mesh), 4);
        sf_mesh_free(mesh);

        let mut other = ptr::null_mut();
        assert_eq!(sf_mesh_new(p.as_ptr(), 4, t.as_ptr(), 1, &mut other), SfStatus::InvalidMesh);
        assert!(other.is_null());
        assert!(last_error().contains("manifold"));
        assert_eq!(sf_mesh_new(ptr::null(), 4, t.as_ptr(), 4, &mut other), SfStatus::NullPointer);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut mesh = ptr::null_mut();
        assert_eq!(sf_mesh_icosphere(2, 1.0, ptr::null_mut()), SfStatus::NullPointer);
        assert_eq!(sf_mesh_icosphere(20, 1.0, &mut mesh), SfStatus::InvalidArgument);
        let missing = CString::new("/no/such/mesh.off").unwrap();
        assert_eq!(sf_mesh_load(missing.as_ptr(), &mut mesh), SfStatus::Io);
        assert!(!last_error().is_empty());

        let traj = trajectory();
        let mut buf = [0.0; 3];
        assert_eq!(sf_trajectory_slice_positions(traj, 0.1, buf.as_mut_ptr(), 3), SfStatus::BufferTooSmall);
        let mut big = vec![0.0; 3 * 162];
        assert_eq!(sf_trajectory_slice_positions(traj, -1.0, big.as_mut_ptr(), big.len()), SfStatus::OutOfRange);
        let mut p = 0.0;
        assert_eq!(sf_coupling_probability(traj, 0, 10_000, 0.02, 0.1, 1e-3, 1.0, 4, 1, &mut p), SfStatus::InvalidArgument);
        assert_eq!(sf_simulate_endpoints(traj, 0, 0.05, 0.1, 1e-3, 3.0, 1, 4, big.as_mut_ptr(), big.len()), SfStatus::InvalidArgument);
    }
}

#[test]
fn trajectory_round_trip_and_queries() {
    unsafe {
        let traj = trajectory();
        let mut tc = 0.0;
        assert_eq!(sf_trajectory_explosion_time(traj, &mut tc), SfStatus::Ok);
        assert!((tc - 0.25).abs() < 0.01);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(sf_trajectory_backward_range(traj, &mut lo, &mut hi), SfStatus::Ok);
        assert!(lo < hi && (hi - tc).abs() < 1e-12);

        let n = sf_trajectory_vertex_count(traj);
        let mut pos = vec![0.0; 3 * n];
        let u = 0.5 * tc;
        assert_eq!(sf_trajectory_slice_positions(traj, u, pos.as_mut_ptr(), pos.len()), SfStatus::Ok);
        let r = pos.chunks(3).map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()).sum::<f64>() / n as f64;
        assert!((r - (4.0 * u).sqrt()).abs() < 0.02, "radius {r}");

        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().join("t").to_str().unwrap()).unwrap();
        assert_eq!(sf_trajectory_save(traj, d.as_ptr()), SfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sf_trajectory_load(d.as_ptr(), &mut back), SfStatus::Ok);
        let mut tc2 = 0.0;
        assert_eq!(sf_trajectory_explosion_time(back, &mut tc2), SfStatus::Ok);
        assert_eq!(tc, tc2);
        sf_trajectory_free(back);
    }
}

#[test]
fn stochastic_calls_are_reproducible() {
    unsafe {
        let traj = trajectory();
        let mut a = vec![0.0; 30];
        let mut b = vec![0.0; 30];
        assert_eq!(sf_simulate_endpoints(traj, 0, 0.05, 0.15, 1e-3, 0.5, 9, 10, a.as_mut_ptr(), 30), SfStatus::Ok);
        assert_eq!(sf_simulate_endpoints(traj, 0, 0.05, 0.15, 1e-3, 0.5, 9, 10, b.as_mut_ptr(), 30), SfStatus::Ok);
        assert_eq!(a, b);
        let r = (4.0f64 * 0.15).sqrt();
        assert!(a.chunks(3).all(|p| ((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - r).abs() < 0.03));

        let (mut p, mut q) = (0.0, 0.0);
        assert_eq!(sf_coupling_probability(traj, 0, 1, 0.02, 0.2, 5e-4, 1.0, 16, 3, &mut p), SfStatus::Ok);
        assert_eq!(sf_coupling_probability(traj, 0, 1, 0.02, 0.2, 5e-4, 1.0, 16, 3, &mut q), SfStatus::Ok);
        assert_eq!(p, q);
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn density_evolution_conserves_mass() {
    unsafe {
        let traj = trajectory();
        let n = sf_trajectory_vertex_count(traj);
        let mut h = vec![1.0; n];
        assert_eq!(sf_density_evolve(traj, h.as_mut_ptr(), n, 0.05, 0.2, 1e-3, 0.5), SfStatus::Ok);
        // A uniform start stays uniform on a sphere, at density 1 / area.
        let expected = 1.0 / (4.0 * std::f64::consts::PI * 4.0 * 0.2);
        assert!(h.iter().all(|x| (x / expected - 1.0).abs() < 0.05));
        assert_eq!(sf_density_evolve(traj, h.as_mut_ptr(), n, 0.2, 0.1, 1e-3, 0.5), SfStatus::InvalidArgument);
    }
}
