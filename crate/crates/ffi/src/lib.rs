//! C interface to `shrinkflow`.
//!
//! Objects are opaque handles created by `sf_*_new`/`sf_*_load`/`sf_flow_run`
//! and released with the matching `sf_*_free`. Every fallible call returns an
//! [`SfStatus`]; on failure `sf_last_error` describes the most recent error
//! raised on the calling thread. Array arguments are caller-owned buffers
//! whose capacity is passed explicitly; a buffer that is too small yields
//! `SF_STATUS_BUFFER_TOO_SMALL` without writing anything.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use shrinkflow::brownian::{ensemble, EnsembleConfig, GeneratorConvention};
use shrinkflow::coupling::{coupling_batch, injectivity_proxy, CouplingConfig};
use shrinkflow::density::{DensityField, DensitySolver};
use shrinkflow::flow::{run_flow, FlowConfig, FlowTrajectory};
use shrinkflow::geometry::validate_convex_mesh;
use shrinkflow::mesh::builtin::{ellipsoid, icosphere};
use shrinkflow::mesh::io::load_mesh;
use shrinkflow::mesh::{Embedding, SurfacePoint, TriangulatedHypersurface, Vec3};
use shrinkflow::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    InvalidMesh = 4,
    NotConvex = 5,
    OutOfRange = 6,
    NumericalFailure = 7,
    Io = 8,
    Parse = 9,
    Panic = 10,
    Other = 11,
}

/// A triangulated closed surface.
pub struct SfMesh(TriangulatedHypersurface);

/// A computed flow, queried in backward time `u = T_c - t`.
pub struct SfTrajectory(FlowTrajectory);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> SfStatus {
    match e {
        Error::NonManifold(_) | Error::Degenerate { .. } => SfStatus::InvalidMesh,
        Error::NotConvex { .. } | Error::ConvexityLost { .. } => SfStatus::NotConvex,
        Error::OutOfRange { .. } => SfStatus::OutOfRange,
        Error::BadParams(_)
        | Error::Config(_)
        | Error::DomainError(_)
        | Error::InsufficientPaths { .. }
        | Error::InsufficientRuns { .. }
        | Error::TooFar { .. }
        | Error::BaseMismatch => SfStatus::InvalidArgument,
        Error::SolverFailure { .. } | Error::StepRejected(_) | Error::WalkStuck(_) | Error::StepTooLong { .. } => {
            SfStatus::NumericalFailure
        }
        Error::Io(_) => SfStatus::Io,
        Error::Parse { .. } | Error::Json(_) => SfStatus::Parse,
        _ => SfStatus::Other,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), SfStatus>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            SfStatus::Panic
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, SfStatus>;
}

impl<T> OrStatus<T> for shrinkflow::Result<T> {
    fn or_status(self) -> Result<T, SfStatus> {
        self.map_err(|e| {
            set_error(e.to_string());
            status_of(&e)
        })
    }
}

fn invalid(msg: &str) -> SfStatus {
    set_error(msg);
    SfStatus::InvalidArgument
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, SfStatus> {
    p.as_ref().ok_or_else(|| {
        set_error(format!("{what} is null"));
        SfStatus::NullPointer
    })
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, SfStatus> {
    p.as_mut().ok_or_else(|| {
        set_error(format!("{what} is null"));
        SfStatus::NullPointer
    })
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, SfStatus> {
    if p.is_null() {
        set_error("path is null");
        return Err(SfStatus::NullPointer);
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn write_out(data: &[f64], out: *mut f64, capacity: usize) -> Result<(), SfStatus> {
    if out.is_null() {
        set_error("output buffer is null");
        return Err(SfStatus::NullPointer);
    }
    if capacity < data.len() {
        set_error(format!("output buffer holds {capacity} values, {} needed", data.len()));
        return Err(SfStatus::BufferTooSmall);
    }
    ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
    Ok(())
}

fn convention(c: f64) -> Result<GeneratorConvention, SfStatus> {
    GeneratorConvention::new(c).or_status()
}

fn flatten(points: impl IntoIterator<Item = Vec3>) -> Vec<f64> {
    points.into_iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn vertex_point(traj: &FlowTrajectory, v: u32) -> Result<SurfacePoint, SfStatus> {
    if v as usize >= traj.topology().n_vertices() {
        return Err(invalid("vertex index out of range"));
    }
    Ok(SurfacePoint::at_vertex(traj.topology(), v as usize))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last error on this thread; valid until the next failing
/// call on the same thread. Empty if no error occurred.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Subdivided icosahedron projected onto the sphere of the given radius.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_icosphere(subdiv: u32, radius: f64, out: *mut *mut SfMesh) -> SfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(SfMesh(icosphere(subdiv, radius).or_status()?)));
        Ok(())
    })
}

/// Ellipsoid with semi-axes `a`, `b`, `c`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_ellipsoid(a: f64, b: f64, c: f64, subdiv: u32, out: *mut *mut SfMesh) -> SfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(SfMesh(ellipsoid(a, b, c, subdiv).or_status()?)));
        Ok(())
    })
}

/// Mesh from `3 * n_vertices` coordinates and `3 * n_triangles` indices.
///
/// # Safety
/// `positions` and `triangles` must point to arrays of the stated lengths
/// and `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_new(
    positions: *const f64,
    n_vertices: usize,
    triangles: *const u32,
    n_triangles: usize,
    out: *mut *mut SfMesh,
) -> SfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if positions.is_null() || triangles.is_null() {
            set_error("positions or triangles is null");
            return Err(SfStatus::NullPointer);
        }
        let p = std::slice::from_raw_parts(positions, 3 * n_vertices);
        let t = std::slice::from_raw_parts(triangles, 3 * n_triangles);
        let pos = p.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let tris = t.chunks_exact(3).map(|c| [c[0] as usize, c[1] as usize, c[2] as usize]).collect();
        *out = Box::into_raw(Box::new(SfMesh(TriangulatedHypersurface::new(pos, tris).or_status()?)));
        Ok(())
    })
}

/// Loads an OFF or OBJ file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_load(path: *const c_char, out: *mut *mut SfMesh) -> SfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(SfMesh(load_mesh(path_arg(path)?).or_status()?)));
        Ok(())
    })
}

/// # Safety
/// `mesh` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_free(mesh: *mut SfMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// Number of vertices, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_vertex_count(mesh: *const SfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.n_vertices())
}

/// Number of triangles, or 0 for a null handle.
///
/// # Safety
/// `mesh` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_triangle_count(mesh: *const SfMesh) -> usize {
    mesh.as_ref().map_or(0, |m| m.0.topology().n_triangles())
}

/// Writes `3 * vertex_count` coordinates.
///
/// # Safety
/// `mesh` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_positions(mesh: *const SfMesh, out: *mut f64, capacity: usize) -> SfStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        write_out(&flatten(m.0.vertex_positions().iter().copied()), out, capacity)
    })
}

/// Writes the discrete mean curvature of every vertex.
///
/// # Safety
/// `mesh` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_mean_curvature(mesh: *const SfMesh, out: *mut f64, capacity: usize) -> SfStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        write_out(&m.0.vertex_data().mean_curvature, out, capacity)
    })
}

/// Writes the smallest edge convexity indicator and whether every edge is
/// strictly convex (1) or not (0).
///
/// # Safety
/// `mesh` must be a live handle; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_mesh_convexity(mesh: *const SfMesh, min_indicator: *mut f64, strictly_convex: *mut i32) -> SfStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        let (mi, sc) = (out_ref(min_indicator, "min_indicator")?, out_ref(strictly_convex, "strictly_convex")?);
        let r = validate_convex_mesh(&m.0).or_status()?;
        *mi = r.min_indicator;
        *sc = r.strictly_convex as i32;
        Ok(())
    })
}

/// Runs the flow from `mesh` with initial step `dt0` until the area drops
/// below `stop_area_fraction` of its initial value.
///
/// # Safety
/// `mesh` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_flow_run(
    mesh: *const SfMesh,
    dt0: f64,
    stop_area_fraction: f64,
    out: *mut *mut SfTrajectory,
) -> SfStatus {
    guard(|| {
        let m = deref(mesh, "mesh")?;
        let out = out_ref(out, "out")?;
        let traj = run_flow(&m.0, &FlowConfig::new(dt0, stop_area_fraction)).or_status()?;
        *out = Box::into_raw(Box::new(SfTrajectory(traj)));
        Ok(())
    })
}

/// Loads a trajectory directory written by `sf_trajectory_save` or the CLI.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_load(dir: *const c_char, out: *mut *mut SfTrajectory) -> SfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = Box::into_raw(Box::new(SfTrajectory(FlowTrajectory::load(path_arg(dir)?).or_status()?)));
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_save(traj: *const SfTrajectory, dir: *const c_char) -> SfStatus {
    guard(|| deref(traj, "trajectory")?.0.save(path_arg(dir)?).or_status())
}

/// # Safety
/// `traj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_free(traj: *mut SfTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of vertices of every slice, or 0 for a null handle.
///
/// # Safety
/// `traj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_vertex_count(traj: *const SfTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.0.topology().n_vertices())
}

/// Estimated extinction time `T_c`.
///
/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_explosion_time(traj: *const SfTrajectory, out: *mut f64) -> SfStatus {
    guard(|| {
        *out_ref(out, "out")? = deref(traj, "trajectory")?.0.explosion_time();
        Ok(())
    })
}

/// Range of backward times covered by the snapshots.
///
/// # Safety
/// `traj` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_backward_range(traj: *const SfTrajectory, lo: *mut f64, hi: *mut f64) -> SfStatus {
    guard(|| {
        let (a, b) = deref(traj, "trajectory")?.0.backward_range();
        *out_ref(lo, "lo")? = a;
        *out_ref(hi, "hi")? = b;
        Ok(())
    })
}

/// Vertex positions of the slice at backward time `u`.
///
/// # Safety
/// `traj` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_trajectory_slice_positions(
    traj: *const SfTrajectory,
    u: f64,
    out: *mut f64,
    capacity: usize,
) -> SfStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.0;
        let view = t.backward_view(u).or_status()?;
        write_out(&flatten(view.positions()), out, capacity)
    })
}

/// Positions at backward time `u1` of `paths` walkers started at vertex
/// `start` at `u0`, generator `c Δ`. Writes `3 * paths` coordinates.
///
/// # Safety
/// `traj` must be a live handle and `out` hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_simulate_endpoints(
    traj: *const SfTrajectory,
    start: u32,
    u0: f64,
    u1: f64,
    dt: f64,
    c: f64,
    seed: u64,
    paths: usize,
    out: *mut f64,
    capacity: usize,
) -> SfStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.0;
        if capacity < 3 * paths {
            set_error(format!("output buffer holds {capacity} values, {} needed", 3 * paths));
            return Err(SfStatus::BufferTooSmall);
        }
        let cfg = EnsembleConfig { paths, dt, conv: convention(c)?, seed };
        let runs = ensemble(t, vertex_point(t, start)?, u0, &[u1], &cfg, 0).or_status()?;
        let view = t.backward_view(u1).or_status()?;
        write_out(&flatten(runs.iter().map(|p| view.point_position(&p.points[0]))), out, capacity)
    })
}

/// Evolves vertex densities `h` (one per vertex, normalized on entry to
/// unit mass) from backward time `u0` to `u1` in place.
///
/// # Safety
/// `traj` must be a live handle and `h` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_density_evolve(
    traj: *const SfTrajectory,
    h: *mut f64,
    len: usize,
    u0: f64,
    u1: f64,
    dt: f64,
    c: f64,
) -> SfStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.0;
        if h.is_null() {
            set_error("density buffer is null");
            return Err(SfStatus::NullPointer);
        }
        if len != t.topology().n_vertices() {
            return Err(invalid("density length differs from the vertex count"));
        }
        let values = std::slice::from_raw_parts_mut(h, len);
        let field = DensityField::normalized(t, u0, values.to_vec()).or_status()?;
        let end = DensitySolver::new(t, convention(c)?).evolve(&field, u1, dt, |_| {}).or_status()?;
        values.copy_from_slice(&end.values);
        Ok(())
    })
}

/// Fraction of `runs` mirror-coupled pairs, started at vertices `a` and `b`
/// at backward time `u0`, that have coalesced by `u1`.
///
/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sf_coupling_probability(
    traj: *const SfTrajectory,
    a: u32,
    b: u32,
    u0: f64,
    u1: f64,
    dt: f64,
    c: f64,
    runs: usize,
    seed: u64,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        let t = &deref(traj, "trajectory")?.0;
        let out = out_ref(out, "out")?;
        if runs == 0 {
            return Err(invalid("runs must be positive"));
        }
        let cfg = CouplingConfig::from_proxy(injectivity_proxy(t.initial()).or_status()?, dt, convention(c)?);
        let res = coupling_batch(t, &cfg, vertex_point(t, a)?, vertex_point(t, b)?, (u0, u1), runs, seed).or_status()?;
        *out = res.iter().filter(|r| r.coupling_time.is_some()).count() as f64 / runs as f64;
        Ok(())
    })
}
