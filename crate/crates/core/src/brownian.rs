//! Brownian motion in the evolving metric of a flow trajectory, simulated
//! as a geodesic random walk in backward time `u` (slice `Tc - u`).

use nalgebra::{Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geodesic::{walk_straight, MAX_STEP_FRACTION};
use crate::mesh::{triangle_frame, Embedding, SurfacePoint, Topology, Vec3};
use crate::parallel::par_map;
use crate::sphere::{angle_cdf_unit_two_sphere, SphereOracle};
use crate::stats::{self, CellPartition, KsResult, LineFit};

/// Generator `c Δ_g` of the simulated motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConvention {
    pub c: f64,
}

impl GeneratorConvention {
    pub const HALF: Self = Self { c: 0.5 };
    pub const ONE: Self = Self { c: 1.0 };

    pub fn new(c: f64) -> Result<Self> {
        if c == 0.5 || c == 1.0 {
            Ok(Self { c })
        } else {
            Err(Error::BadParams(format!("generator coefficient must be 1/2 or 1, got {c}")))
        }
    }

    /// Accepts `half`, `1/2`, `0.5`, `one`, `1`.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "half" | "1/2" | "0.5" => Ok(Self::HALF),
            "one" | "1" | "1.0" => Ok(Self::ONE),
            other => Err(Error::Config(format!("unknown convention {other:?} (use half or one)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        if self.c == 0.5 {
            "half"
        } else {
            "one"
        }
    }

    /// Rate of `Σ|ΔY|²` for the ambient image of an `n`-dimensional motion.
    pub fn qv_slope(&self, n: usize) -> f64 {
        2.0 * self.c * n as f64
    }
}

/// Source of standard Gaussian pairs.
pub trait Noise {
    fn gaussian_pair(&mut self) -> [f64; 2];
}

pub struct RngNoise<R>(pub R);

impl<R: Rng> Noise for RngNoise<R> {
    fn gaussian_pair(&mut self) -> [f64; 2] {
        [self.0.sample(StandardNormal), self.0.sample(StandardNormal)]
    }
}

/// Zero-variance noise; walkers never move.
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn gaussian_pair(&mut self) -> [f64; 2] {
        [0.0, 0.0]
    }
}

/// Independent, reproducible stream `stream` of the master `seed`.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn path_noise(seed: u64, stream: u64) -> RngNoise<ChaCha8Rng> {
    RngNoise(path_rng(seed, stream))
}

/// Tangent frame stored in edge coordinates of its triangle, so that moving
/// to another slice applies the affine pushforward of the triangle map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub coeffs: [[f64; 2]; 2],
}

impl Frame {
    fn from_ambient<E: Embedding + ?Sized>(mesh: &E, t: usize, v: &[Vec3; 2]) -> Self {
        let [p0, p1, p2] = mesh.corners(t);
        let (e1, e2) = (p1 - p0, p2 - p0);
        let g = Matrix2::new(e1.dot(&e1), e1.dot(&e2), e1.dot(&e2), e2.dot(&e2));
        let inv = g.try_inverse().unwrap_or_else(Matrix2::zeros);
        let solve = |x: &Vec3| {
            let r = inv * nalgebra::Vector2::new(x.dot(&e1), x.dot(&e2));
            [r[0], r[1]]
        };
        Self { coeffs: [solve(&v[0]), solve(&v[1])] }
    }

    fn ambient<E: Embedding + ?Sized>(&self, mesh: &E, t: usize) -> [Vec3; 2] {
        let [p0, p1, p2] = mesh.corners(t);
        let (e1, e2) = (p1 - p0, p2 - p0);
        self.coeffs.map(|[a, b]| e1 * a + e2 * b)
    }
}

/// Symmetric orthonormalization `F (FᵀF)^{-1/2}`.
pub fn lowdin(f: [Vec3; 2]) -> [Vec3; 2] {
    let g = Matrix2::new(f[0].dot(&f[0]), f[0].dot(&f[1]), f[0].dot(&f[1]), f[1].dot(&f[1]));
    let eig = SymmetricEigen::new(g);
    let d = Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.max(1e-300).sqrt()));
    let s = eig.eigenvectors * d * eig.eigenvectors.transpose();
    [f[0] * s[(0, 0)] + f[1] * s[(1, 0)], f[0] * s[(0, 1)] + f[1] * s[(1, 1)]]
}

/// A surface point with its transported orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Walker {
    pub point: SurfacePoint,
    pub frame: Frame,
}

impl Walker {
    pub fn new<E: Embedding + ?Sized>(mesh: &E, point: SurfacePoint) -> Self {
        let f = triangle_frame(mesh, point.triangle);
        Self { point, frame: Frame::from_ambient(mesh, point.triangle, &f) }
    }

    /// Frame vectors orthonormalized in the metric of `mesh`.
    pub fn frame_vectors<E: Embedding + ?Sized>(&self, mesh: &E) -> [Vec3; 2] {
        let f = self.frame.ambient(mesh, self.point.triangle);
        let n = mesh.triangle_normal(self.point.triangle);
        lowdin(f.map(|v| v - n * n.dot(&v)))
    }

    /// Moves along the tangent vector `v` (ambient, in the plane of the
    /// current triangle of `mesh`), transporting the frame.
    pub fn advance<E: Embedding + ?Sized>(&mut self, mesh: &E, v: &Vec3, max_length: f64) -> Result<()> {
        let len = v.norm();
        if len > max_length {
            return Err(Error::StepTooLong { length: len, limit: max_length });
        }
        let mut carry = self.frame_vectors(mesh);
        let w = walk_straight(mesh, &self.point, v, len, &mut carry)?;
        self.point = w.end;
        self.frame = Frame::from_ambient(mesh, w.end.triangle, &lowdin(carry));
        Ok(())
    }
}

/// One step of the walk on a fixed slice; returns the tangent increment.
pub fn gtbm_step_on<E: Embedding + ?Sized, N: Noise>(
    mesh: &E,
    max_length: f64,
    walker: &mut Walker,
    dt: f64,
    conv: GeneratorConvention,
    noise: &mut N,
) -> Result<Vec3> {
    let [e1, e2] = walker.frame_vectors(mesh);
    let [g1, g2] = noise.gaussian_pair();
    let s = (2.0 * conv.c * dt).sqrt();
    let xi = (e1 * g1 + e2 * g2) * s;
    walker.advance(mesh, &xi, max_length)?;
    Ok(xi)
}

/// Step limit on the slice at backward time `u`.
pub fn step_limit(traj: &FlowTrajectory, u: f64) -> Result<f64> {
    Ok(MAX_STEP_FRACTION * traj.diameter_bound(traj.explosion_time() - u).map_err(|_| out_of_range(traj, u))?)
}

fn out_of_range(traj: &FlowTrajectory, u: f64) -> Error {
    let (lo, hi) = traj.backward_range();
    Error::OutOfRange { t: u, lo, hi }
}

/// One step over `[u, u + dt]`, taken on the slice at the midpoint.
pub fn gtbm_step<N: Noise>(
    traj: &FlowTrajectory,
    u: f64,
    walker: &mut Walker,
    dt: f64,
    conv: GeneratorConvention,
    noise: &mut N,
) -> Result<Vec3> {
    let um = u + 0.5 * dt;
    let view = traj.backward_view(um)?;
    gtbm_step_on(&view, step_limit(traj, um)?, walker, dt, conv, noise)
}

/// Sampled path in backward time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BMPath {
    pub times: Vec<f64>,
    pub points: Vec<SurfacePoint>,
    /// Cumulative `Σ|ΔY|²` of the ambient image on the moving slices.
    pub qv_ambient: Vec<f64>,
    /// Cumulative `Σ|Δx|²` of the positions read on the initial surface.
    pub qv_initial: Vec<f64>,
    pub frame: Frame,
    pub stream: u64,
}

/// Runs a walker from `u0` and records it at each of the increasing
/// `times`, using steps no longer than `dt_max`.
pub fn simulate_sampled<N: Noise>(
    traj: &FlowTrajectory,
    start: SurfacePoint,
    u0: f64,
    times: &[f64],
    dt_max: f64,
    conv: GeneratorConvention,
    noise: &mut N,
) -> Result<BMPath> {
    let (lo, hi) = traj.backward_range();
    if !(u0 >= lo && u0 <= hi) {
        return Err(out_of_range(traj, u0));
    }
    if let Some(&last) = times.last() {
        if last > hi {
            return Err(out_of_range(traj, last));
        }
    }
    if !(dt_max > 0.0) {
        return Err(Error::BadParams(format!("time step must be positive, got {dt_max}")));
    }
    let init = traj.initial();
    let mut walker = Walker::new(&traj.backward_view(u0)?, start);
    let mut u = u0;
    let mut y = traj.backward_view(u0)?.point_position(&walker.point);
    let mut x0 = init.point_position(&walker.point);
    let (mut qa, mut qi) = (0.0, 0.0);
    let mut path = BMPath {
        times: Vec::with_capacity(times.len()),
        points: Vec::with_capacity(times.len()),
        qv_ambient: Vec::with_capacity(times.len()),
        qv_initial: Vec::with_capacity(times.len()),
        frame: walker.frame,
        stream: 0,
    };
    for &target in times {
        if target < u - 1e-15 {
            return Err(Error::BadParams("sample times must be increasing and not before the start".into()));
        }
        let span = target - u;
        let n = (span / dt_max - 1e-9).ceil().max(0.0) as usize;
        let h = if n > 0 { span / n as f64 } else { 0.0 };
        for k in 0..n {
            gtbm_step(traj, u, &mut walker, h, conv, noise)?;
            u = if k + 1 == n { target } else { u + h };
            let y1 = traj.backward_view(u)?.point_position(&walker.point);
            let x1 = init.point_position(&walker.point);
            qa += (y1 - y).norm_squared();
            qi += (x1 - x0).norm_squared();
            y = y1;
            x0 = x1;
        }
        path.times.push(target);
        path.points.push(walker.point);
        path.qv_ambient.push(qa);
        path.qv_initial.push(qi);
    }
    path.frame = walker.frame;
    Ok(path)
}

/// Path on the uniform grid from `u0` to `u1`.
pub fn simulate_path<N: Noise>(
    traj: &FlowTrajectory,
    start: SurfacePoint,
    u0: f64,
    u1: f64,
    dt: f64,
    conv: GeneratorConvention,
    noise: &mut N,
) -> Result<BMPath> {
    if u1 < u0 {
        return Err(Error::BadParams(format!("end time {u1} precedes start {u0}")));
    }
    let n = ((u1 - u0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..=n).map(|k| u0 + (u1 - u0) * k as f64 / n.max(1) as f64).collect();
    if n == 0 {
        times.truncate(1);
    }
    simulate_sampled(traj, start, u0, &times, dt, conv, noise)
}

/// Ambient image `Y_u = F(Tc - u, X_u)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AmbientPath {
    pub times: Vec<f64>,
    pub points: Vec<Vec3>,
    pub qv: Vec<f64>,
}

pub fn pushforward_y(traj: &FlowTrajectory, path: &BMPath) -> Result<AmbientPath> {
    let points = path
        .times
        .iter()
        .zip(&path.points)
        .map(|(&u, p)| Ok(traj.backward_view(u)?.point_position(p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbientPath { times: path.times.clone(), points, qv: path.qv_ambient.clone() })
}

/// Shared ensemble parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub dt: f64,
    pub conv: GeneratorConvention,
    pub seed: u64,
}

/// `paths` independent walkers from `start`, stream `group << 32 | i`.
pub fn ensemble(
    traj: &FlowTrajectory,
    start: SurfacePoint,
    u0: f64,
    times: &[f64],
    cfg: &EnsembleConfig,
    group: u64,
) -> Result<Vec<BMPath>> {
    par_map(cfg.paths, |i| {
        let stream = (group << 32) | i as u64;
        let mut noise = path_noise(cfg.seed, stream);
        let mut p = simulate_sampled(traj, start, u0, times, cfg.dt, cfg.conv, &mut noise)?;
        p.stream = stream;
        Ok(p)
    })
}

/// Backward times `u_k` with `k` equal steps in `[a, b]`.
pub fn uniform_times(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| a + (b - a) * i as f64 / k as f64).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub convention: GeneratorConvention,
    pub paths: usize,
    /// `[window][coordinate]` z-scores of the mean increment.
    pub drift_z_scores: Vec<[f64; 3]>,
    pub max_abs_z: f64,
    pub qv_fit: LineFit,
    pub expected_qv_slope: f64,
    pub max_norm: f64,
}

/// Martingale and quadratic-variation statistics of an ensemble of ambient
/// paths sharing one time grid. Windows are consecutive grid intervals plus
/// the whole range.
pub fn martingale_qv_test(paths: &[AmbientPath], conv: GeneratorConvention, dim: usize) -> Result<MartingaleReport> {
    if paths.len() < 100 {
        return Err(Error::InsufficientPaths { needed: 100, got: paths.len() });
    }
    let grid = &paths[0].times;
    if grid.len() < 3 || paths.iter().any(|p| p.times != *grid) {
        return Err(Error::BadParams("paths must share a time grid with at least three samples".into()));
    }
    let last = grid.len() - 1;
    let mut windows: Vec<(usize, usize)> = (0..last).map(|k| (k, k + 1)).collect();
    windows.push((0, last));
    let drift_z_scores: Vec<[f64; 3]> = windows
        .iter()
        .map(|&(a, b)| {
            let mut z = [0.0; 3];
            for (c, zc) in z.iter_mut().enumerate() {
                let inc: Vec<f64> = paths.iter().map(|p| p.points[b][c] - p.points[a][c]).collect();
                *zc = stats::z_score(&inc);
            }
            z
        })
        .collect();
    let max_abs_z = drift_z_scores.iter().flatten().fold(0.0f64, |m, z| m.max(z.abs()));
    let elapsed: Vec<f64> = grid.iter().map(|u| u - grid[0]).collect();
    let mean_qv: Vec<f64> =
        (0..grid.len()).map(|k| paths.iter().map(|p| p.qv[k]).sum::<f64>() / paths.len() as f64).collect();
    let qv_fit = stats::linear_fit(&elapsed, &mean_qv);
    let max_norm = paths.iter().flat_map(|p| p.points.iter().map(|y| y.norm())).fold(0.0, f64::max);
    Ok(MartingaleReport {
        convention: conv,
        paths: paths.len(),
        drift_z_scores,
        max_abs_z,
        qv_fit,
        expected_qv_slope: conv.qv_slope(dim),
        max_norm,
    })
}

/// Endpoints at backward time `t_star` of walkers frozen at `x0` until `eps`.
pub fn birthless_endpoints(
    traj: &FlowTrajectory,
    x0: SurfacePoint,
    eps: f64,
    t_star: f64,
    cfg: &EnsembleConfig,
    group: u64,
) -> Result<Vec<SurfacePoint>> {
    if !(eps < t_star) {
        return Err(Error::BadParams(format!("birth time {eps} must precede {t_star}")));
    }
    let paths = ensemble(traj, x0, eps, &[t_star], cfg, group)?;
    Ok(paths.into_iter().map(|p| p.points[0]).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirthlessReport {
    pub eps: Vec<f64>,
    pub t_star: f64,
    pub convention: GeneratorConvention,
    pub paths: usize,
    /// Per-ε visit counts at the nearest vertex.
    pub vertex_counts: Vec<Vec<u32>>,
    /// Per-ε densities `count / (N a_v)` on the slice at `t_star`.
    pub vertex_density: Vec<Vec<f64>>,
    /// Per-ε cell laws.
    pub cell_laws: Vec<Vec<f64>>,
    /// Cell total variation between consecutive ε.
    pub tv_consecutive: Vec<f64>,
    /// Cell total variation to the normalized area measure at `t_star`.
    pub tv_uniform: Vec<f64>,
}

/// Laws at `t_star` of the processes born at `x0` at each `ε`.
pub fn birthless_ensemble(
    traj: &FlowTrajectory,
    x0: SurfacePoint,
    eps_list: &[f64],
    t_star: f64,
    cfg: &EnsembleConfig,
    cells: &CellPartition,
) -> Result<BirthlessReport> {
    let topo = traj.topology().clone();
    let slice = traj.backward_view(t_star)?.to_mesh()?;
    let areas = &slice.vertex_data().area;
    let uniform = cells.aggregate(&areas.iter().map(|a| a / slice.total_area()).collect::<Vec<_>>());
    let mut report = BirthlessReport {
        eps: eps_list.to_vec(),
        t_star,
        convention: cfg.conv,
        paths: cfg.paths,
        vertex_counts: vec![],
        vertex_density: vec![],
        cell_laws: vec![],
        tv_consecutive: vec![],
        tv_uniform: vec![],
    };
    for (k, &eps) in eps_list.iter().enumerate() {
        let ends = birthless_endpoints(traj, x0, eps, t_star, cfg, k as u64)?;
        let (counts, density, law) = occupancy(&topo, areas, cells, &ends);
        report.tv_uniform.push(stats::total_variation(&law, &uniform));
        report.vertex_counts.push(counts);
        report.vertex_density.push(density);
        report.cell_laws.push(law);
    }
    report.tv_consecutive =
        report.cell_laws.windows(2).map(|w| stats::total_variation(&w[0], &w[1])).collect();
    Ok(report)
}

/// Vertex counts, vertex densities and cell law of a point cloud.
pub fn occupancy(
    topo: &Topology,
    areas: &[f64],
    cells: &CellPartition,
    points: &[SurfacePoint],
) -> (Vec<u32>, Vec<f64>, Vec<f64>) {
    let mut counts = vec![0u32; topo.n_vertices()];
    let labels: Vec<usize> = points
        .iter()
        .map(|p| {
            let v = stats::nearest_vertex(topo, p);
            counts[v] += 1;
            cells.cell_of_vertex[v]
        })
        .collect();
    let n = points.len().max(1) as f64;
    let density = counts.iter().zip(areas).map(|(&c, a)| c as f64 / (n * a)).collect();
    (counts, density, stats::histogram(&labels, cells.n_cells()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeChangeReport {
    pub convention: GeneratorConvention,
    pub paths: usize,
    /// Grid in the time-changed clock `s`.
    pub s_grid: Vec<f64>,
    /// KS test of the angular increments against the round-sphere law.
    pub angle_ks: KsResult,
    /// Slope of `Σ|Δx|²` (positions on the initial sphere) against `s`.
    pub qv_slope_s: f64,
    pub expected_qv_slope_s: f64,
    /// Backward times at the centre of each local window.
    pub local_u: Vec<f64>,
    /// Local quadratic-variation rate relative to the window nearest `Tc`.
    pub local_ratio: Vec<f64>,
    /// Same ratio from the homothety scale.
    pub oracle_ratio: Vec<f64>,
}

/// Resamples the backward motion on a round-sphere trajectory at `φ(s)` and
/// compares it with Brownian motion on the initial sphere.
///
/// With generator `c Δ_{g(Tc-u)}` the process `s ↦ X_{φ(s)}` has generator
/// `(c/2) Δ_{g(0)}`, which is the standard one for `c = 1`.
pub fn sphere_time_change_check(
    traj: &FlowTrajectory,
    oracle: &SphereOracle,
    u_window: (f64, f64),
    intervals: usize,
    cfg: &EnsembleConfig,
    start: SurfacePoint,
) -> Result<TimeChangeReport> {
    let (ua, ub) = u_window;
    let s_a = oracle.phi_inverse(ua)?;
    let s_b = oracle.phi_inverse(ub)?;
    let s_grid = uniform_times(s_a, s_b, intervals);
    let times: Vec<f64> = s_grid.iter().map(|&s| oracle.phi(s)).collect();
    let paths = ensemble(traj, start, times[0], &times, cfg, 0)?;
    let init = traj.initial();
    let r0 = oracle.r0;
    // Angular increments, pooled over intervals: isotropy makes them iid.
    let ds = s_grid[1] - s_grid[0];
    let sigma = 0.5 * cfg.conv.c * ds / (r0 * r0);
    let mut angles = Vec::with_capacity(paths.len() * intervals);
    for p in &paths {
        for w in p.points.windows(2) {
            let a = init.point_position(&w[0]).normalize();
            let b = init.point_position(&w[1]).normalize();
            angles.push(a.cross(&b).norm().atan2(a.dot(&b)));
        }
    }
    let angle_ks = stats::ks_one_sample(&angles, |x| angle_cdf_unit_two_sphere(sigma, x));
    let mean_qv: Vec<f64> =
        (0..times.len()).map(|k| paths.iter().map(|p| p.qv_initial[k]).sum::<f64>() / paths.len() as f64).collect();
    let rel_s: Vec<f64> = s_grid.iter().map(|s| s - s_a).collect();
    let qv_slope_s = stats::linear_fit(&rel_s, &mean_qv).slope;
    let n = oracle.n;
    // Local rates per unit backward time.
    let rates: Vec<f64> = (0..intervals).map(|k| (mean_qv[k + 1] - mean_qv[k]) / (times[k + 1] - times[k])).collect();
    let local_u: Vec<f64> = (0..intervals).map(|k| 0.5 * (times[k] + times[k + 1])).collect();
    let scale = |u: f64| -> f64 {
        // Exact average of R0² / r(Tc - u)² over the window.
        let tc = oracle.explosion_time();
        tc * (u.max(1e-300)).ln()
    };
    let avg_scale: Vec<f64> =
        (0..intervals).map(|k| (scale(times[k + 1]) - scale(times[k])) / (times[k + 1] - times[k])).collect();
    let reference = intervals - 1;
    let local_ratio = rates.iter().map(|r| r / rates[reference]).collect();
    let oracle_ratio = avg_scale.iter().map(|s| s / avg_scale[reference]).collect();
    Ok(TimeChangeReport {
        convention: cfg.conv,
        paths: paths.len(),
        s_grid,
        angle_ks,
        qv_slope_s,
        expected_qv_slope_s: cfg.conv.c * n as f64,
        local_u,
        local_ratio,
        oracle_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{run_flow, FlowConfig};
    use crate::mesh::builtin::icosphere;
    use std::sync::OnceLock;

    fn sphere_traj() -> &'static FlowTrajectory {
        static T: OnceLock<FlowTrajectory> = OnceLock::new();
        T.get_or_init(|| run_flow(&icosphere(3, 1.0).unwrap(), &FlowConfig::new(2e-4, 0.05)).unwrap())
    }

    #[test]
    fn convention_parsing() {
        assert_eq!(GeneratorConvention::parse("half").unwrap(), GeneratorConvention::HALF);
        assert_eq!(GeneratorConvention::parse("1").unwrap(), GeneratorConvention::ONE);
        assert!(GeneratorConvention::parse("2").is_err());
        assert!(GeneratorConvention::new(0.3).is_err());
        assert_eq!(GeneratorConvention::HALF.qv_slope(2), 2.0);
    }

    #[test]
    fn lowdin_orthonormalizes() {
        let f = lowdin([Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.3, 2.0, 0.0)]);
        assert!((f[0].norm() - 1.0).abs() < 1e-14 && (f[1].norm() - 1.0).abs() < 1e-14);
        assert!(f[0].dot(&f[1]).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_leaves_point_fixed() {
        let traj = sphere_traj();
        let p = SurfacePoint::new(5, [0.2, 0.3, 0.5]).unwrap();
        let path = simulate_path(traj, p, 0.05, 0.1, 1e-3, GeneratorConvention::HALF, &mut ZeroNoise).unwrap();
        assert!(path.points.iter().all(|q| *q == p));
        // The ambient image follows the flow line of p.
        let y = pushforward_y(traj, &path).unwrap();
        for (u, x) in y.times.iter().zip(&y.points) {
            let expect = traj.backward_view(*u).unwrap().point_position(&p);
            assert!((x - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn single_sample_path() {
        let traj = sphere_traj();
        let p = SurfacePoint::centroid(3);
        let path = simulate_path(traj, p, 0.1, 0.1, 1e-3, GeneratorConvention::ONE, &mut path_noise(1, 0)).unwrap();
        assert_eq!(path.times.len(), 1);
        assert_eq!(path.points[0], p);
    }

    #[test]
    fn conventions_scale_displacement_by_sqrt_two() {
        let traj = sphere_traj();
        let view = traj.backward_view(0.2).unwrap();
        let p = SurfacePoint::centroid(40);
        let mut a = Walker::new(&view, p);
        let mut b = a;
        let xa = gtbm_step_on(&view, 1.0, &mut a, 1e-4, GeneratorConvention::ONE, &mut path_noise(9, 3)).unwrap();
        let xb = gtbm_step_on(&view, 1.0, &mut b, 1e-4, GeneratorConvention::HALF, &mut path_noise(9, 3)).unwrap();
        assert!((xa - xb * 2f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn frame_stays_orthonormal() {
        let traj = sphere_traj();
        let mut w = Walker::new(&traj.backward_view(0.05).unwrap(), SurfacePoint::centroid(0));
        let mut noise = path_noise(4, 0);
        let mut u = 0.05;
        let dt = 1.5e-5;
        for _ in 0..10_000 {
            gtbm_step(traj, u, &mut w, dt, GeneratorConvention::HALF, &mut noise).unwrap();
            u += dt;
            let f = w.frame_vectors(&traj.backward_view(u).unwrap());
            assert!((f[0].norm() - 1.0).abs() < 1e-8 && f[0].dot(&f[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn too_long_step_is_refused() {
        let traj = sphere_traj();
        let p = SurfacePoint::centroid(0);
        struct Loud;
        impl Noise for Loud {
            fn gaussian_pair(&mut self) -> [f64; 2] {
                [8.0, 0.0]
            }
        }
        let r = simulate_path(traj, p, 0.1, 0.2, 0.5, GeneratorConvention::ONE, &mut Loud);
        assert!(matches!(r, Err(Error::StepTooLong { .. })), "{r:?}");
    }

    #[test]
    fn out_of_range_times_are_rejected() {
        let traj = sphere_traj();
        let p = SurfacePoint::centroid(0);
        let r = simulate_path(traj, p, 0.001, 0.01, 1e-3, GeneratorConvention::ONE, &mut path_noise(0, 0));
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn second_moment_per_time_matches_generator() {
        // E|ξ|² = 2 c n dt for one tangent Gaussian step.
        let traj = sphere_traj();
        let view = traj.backward_view(0.2).unwrap();
        for conv in [GeneratorConvention::HALF, GeneratorConvention::ONE] {
            let mut noise = path_noise(11, 0);
            let dts = [1e-4, 2.5e-4, 5e-4, 1e-3];
            let m: Vec<f64> = dts
                .iter()
                .map(|&dt| {
                    let n = 20_000;
                    (0..n)
                        .map(|_| {
                            let mut w = Walker::new(&view, SurfacePoint::centroid(17));
                            gtbm_step_on(&view, 1.0, &mut w, dt, conv, &mut noise).unwrap().norm_squared()
                        })
                        .sum::<f64>()
                        / n as f64
                })
                .collect();
            let fit = stats::linear_fit(&dts, &m);
            assert!((fit.slope / (4.0 * conv.c) - 1.0).abs() < 0.03, "{fit:?}");
        }
    }

    #[test]
    fn ensembles_are_reproducible() {
        let traj = sphere_traj();
        let cfg = EnsembleConfig { paths: 8, dt: 1e-3, conv: GeneratorConvention::HALF, seed: 5 };
        let a = ensemble(traj, SurfacePoint::centroid(0), 0.1, &[0.15, 0.2], &cfg, 0).unwrap();
        let b = ensemble(traj, SurfacePoint::centroid(0), 0.1, &[0.15, 0.2], &cfg, 0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.points, y.points);
        }
        assert_ne!(a[0].points, a[1].points);
    }

    #[test]
    fn martingale_report_needs_paths() {
        let p = AmbientPath { times: vec![0.0, 1.0, 2.0], points: vec![Vec3::zeros(); 3], qv: vec![0.0; 3] };
        assert!(matches!(
            martingale_qv_test(&vec![p; 10], GeneratorConvention::ONE, 2),
            Err(Error::InsufficientPaths { needed: 100, got: 10 })
        ));
    }
}
