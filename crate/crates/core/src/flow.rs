//! Mean curvature flow of a convex mesh with fixed connectivity, the
//! resulting trajectory of slices, Huisken normalization and time maps.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, ConvexityReport};
use crate::linalg::{pcg, CsrPattern};
use crate::mesh::io::{parse_off, to_off_string};
use crate::mesh::{Embedding, Topology, TriangulatedHypersurface, Vec3};

/// Steps are rejected when the max/min edge ratio exceeds this.
pub const MAX_QUALITY_RATIO: f64 = 50.0;
const SOLVER_TOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Explicit,
    SemiImplicit,
}

fn check_step(old: &TriangulatedHypersurface, new_pos: &[Vec3]) -> Result<()> {
    let topo = old.topology_arc();
    let raw = crate::mesh::RawEmbedding { topology: topo, positions: new_pos };
    // An interior point must stay below every face plane, otherwise the
    // surface has turned inside out even if face normals kept their sign.
    let inside = new_pos.iter().sum::<Vec3>() / new_pos.len() as f64;
    for t in 0..topo.n_triangles() {
        let av = raw.area_vector(t);
        if av.dot(&old.area_vector(t)) <= 0.0 || av.dot(&(inside - new_pos[topo.triangle(t)[0]])) >= 0.0 {
            return Err(Error::StepRejected(format!("triangle {t} inverted")));
        }
    }
    let q = geometry::quality_ratio(&raw);
    if q > MAX_QUALITY_RATIO {
        return Err(Error::StepRejected(format!("edge ratio {q:.1} exceeds {MAX_QUALITY_RATIO}")));
    }
    Ok(())
}

/// One flow step `∂_t F = ΔF`.
///
/// The semi-implicit scheme solves `(A + dt K) X_new = A X_old` per coordinate
/// (the weak form of `(I - dt L) X_new = X_old`) with the operators frozen at
/// the current slice.
pub fn mcf_step(mesh: &TriangulatedHypersurface, dt: f64, scheme: Scheme) -> Result<TriangulatedHypersurface> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::BadParams(format!("time step {dt} must be nonnegative")));
    }
    if dt == 0.0 {
        return Ok(mesh.clone());
    }
    let pos = mesh.vertex_positions();
    let new_pos: Vec<Vec3> = match scheme {
        Scheme::Explicit => {
            pos.iter().zip(&mesh.vertex_data().laplacian).map(|(x, l)| x + l * dt).collect()
        }
        Scheme::SemiImplicit => {
            let pattern = Arc::new(CsrPattern::from_topology(mesh.topology_arc()));
            semi_implicit_positions(mesh, &pattern, dt)?
        }
    };
    check_step(mesh, &new_pos)?;
    TriangulatedHypersurface::with_topology(mesh.topology_arc().clone(), new_pos)
}

fn semi_implicit_positions(mesh: &TriangulatedHypersurface, pattern: &Arc<CsrPattern>, dt: f64) -> Result<Vec<Vec3>> {
    let area = &mesh.vertex_data().area;
    let system = geometry::stiffness(mesh, pattern).scaled_plus_diagonal(dt, area);
    let pos = mesh.vertex_positions();
    let n = pos.len();
    let mut out = pos.to_vec();
    for c in 0..3 {
        let rhs: Vec<f64> = (0..n).map(|v| area[v] * pos[v][c]).collect();
        let mut x: Vec<f64> = pos.iter().map(|p| p[c]).collect();
        pcg(&system, &rhs, &mut x, SOLVER_TOL, 10 * n)?;
        for v in 0..n {
            out[v][c] = x[v];
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Initial (and maximal) time step.
    pub dt0: f64,
    /// Stop once area falls to this fraction of the initial area.
    pub stop_area_fraction: f64,
    pub scheme: Scheme,
    /// `dt <= safety / H_max²`.
    pub safety: f64,
    /// A snapshot is stored each time the area drops by this relative amount.
    pub snapshot_area_step: f64,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-4,
            stop_area_fraction: 0.05,
            scheme: Scheme::SemiImplicit,
            safety: 0.2,
            snapshot_area_step: 0.01,
            max_steps: 1_000_000,
        }
    }
}

impl FlowConfig {
    pub fn new(dt0: f64, stop_area_fraction: f64) -> Self {
        Self { dt0, stop_area_fraction, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return Err(Error::BadParams(format!("dt0 = {} must be positive", self.dt0)));
        }
        if !(self.stop_area_fraction > 0.0 && self.stop_area_fraction <= 1.0) {
            return Err(Error::BadParams(format!(
                "stop_area_fraction = {} must lie in (0, 1]",
                self.stop_area_fraction
            )));
        }
        if !(self.safety > 0.0 && self.snapshot_area_step > 0.0 && self.snapshot_area_step < 1.0) {
            return Err(Error::BadParams("safety and snapshot_area_step must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted flow step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub area: f64,
    pub h_max: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub mesh: TriangulatedHypersurface,
}

/// Huisken normalization and the derived time reparametrizations.
///
/// `psi(t) = sqrt(A0 / A(t))` keeps the dilated area constant,
/// `t̃(t) = ∫_0^t psi²`, and `τ(u) = -t̃(Tc - u)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeMaps {
    pub t_c: f64,
    pub t: Vec<f64>,
    pub psi: Vec<f64>,
    pub t_tilde: Vec<f64>,
}

/// Piecewise-linear interpolation on increasing `xs`; `None` outside the range.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Some(ys[0]);
    }
    if i == n {
        return Some(ys[n - 1]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
    Some(ys[i - 1] + w * (ys[i] - ys[i - 1]))
}

impl TimeMaps {
    fn from_log(area0: f64, log: &[(f64, f64)], t_c: f64) -> Self {
        let t: Vec<f64> = log.iter().map(|e| e.0).collect();
        let psi: Vec<f64> = log.iter().map(|e| (area0 / e.1).sqrt()).collect();
        let mut t_tilde = Vec::with_capacity(t.len());
        t_tilde.push(0.0);
        for i in 1..t.len() {
            let inc = 0.5 * (t[i] - t[i - 1]) * (psi[i - 1].powi(2) + psi[i].powi(2));
            t_tilde.push(t_tilde[i - 1] + inc);
        }
        Self { t_c, t, psi, t_tilde }
    }

    fn range_err(&self, x: f64, lo: f64, hi: f64) -> Error {
        Error::OutOfRange { t: x, lo, hi }
    }

    pub fn t_max(&self) -> f64 {
        *self.t.last().expect("nonempty")
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        interp(&self.t, &self.psi, t).ok_or_else(|| self.range_err(t, 0.0, self.t_max()))
    }

    pub fn t_tilde(&self, t: f64) -> Result<f64> {
        interp(&self.t, &self.t_tilde, t).ok_or_else(|| self.range_err(t, 0.0, self.t_max()))
    }

    pub fn t_tilde_inverse(&self, s: f64) -> Result<f64> {
        let hi = *self.t_tilde.last().unwrap();
        interp(&self.t_tilde, &self.t, s).ok_or_else(|| self.range_err(s, 0.0, hi))
    }

    /// Backward times `u` with `Tc - u` inside the flow range.
    pub fn u_range(&self) -> (f64, f64) {
        (self.t_c - self.t_max(), self.t_c)
    }

    pub fn tau(&self, u: f64) -> Result<f64> {
        let (lo, hi) = self.u_range();
        interp(&self.t, &self.t_tilde, self.t_c - u).map(|v| -v).ok_or_else(|| self.range_err(u, lo, hi))
    }

    pub fn tau_inverse(&self, v: f64) -> Result<f64> {
        let s = -v;
        let hi = *self.t_tilde.last().unwrap();
        let t = interp(&self.t_tilde, &self.t, s).ok_or_else(|| self.range_err(v, -hi, 0.0))?;
        Ok(self.t_c - t)
    }
}

/// Time-indexed slices of the flow sharing one connectivity.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    topology: Arc<Topology>,
    snapshots: Vec<Snapshot>,
    log: Vec<StepRecord>,
    t_explosion: f64,
    maps: Option<TimeMaps>,
    config: FlowConfig,
    /// Largest mean curvature per snapshot.
    h_max: Vec<f64>,
    area: Vec<f64>,
    /// Two-sweep lower bounds of the extrinsic diameter per snapshot.
    reach: Vec<f64>,
}

fn integral_h2(mesh: &TriangulatedHypersurface) -> f64 {
    let d = mesh.vertex_data();
    d.area.iter().zip(&d.mean_curvature).map(|(a, h)| a * h * h).sum()
}

/// Farthest vertex from the farthest vertex of vertex 0: at least half the
/// diameter, and exact on centrally symmetric shapes.
pub fn two_sweep_diameter(p: &[Vec3]) -> f64 {
    let far = |from: &Vec3| p.iter().map(|q| (q - from).norm()).enumerate().fold((0, 0.0), |b, (i, d)| if d > b.1 { (i, d) } else { b });
    let (a, _) = far(&p[0]);
    far(&p[a]).1
}

/// Least-squares line through the area tail, extrapolated to zero area.
fn estimate_explosion(log: &[StepRecord], area0: f64, fallback: f64) -> f64 {
    let last = log.last().map(|r| r.area).unwrap_or(area0);
    let cut = last + 0.25 * (area0 - last);
    let tail: Vec<&StepRecord> = log.iter().filter(|r| r.area <= cut).collect();
    if tail.len() < 3 {
        return fallback;
    }
    let n = tail.len() as f64;
    let mt = tail.iter().map(|r| r.t).sum::<f64>() / n;
    let ma = tail.iter().map(|r| r.area).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|r| (r.t - mt) * (r.area - ma)).sum();
    let sxx: f64 = tail.iter().map(|r| (r.t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return fallback;
    }
    mt - ma / slope
}

/// Runs the flow until the area falls below `stop_area_fraction` of its
/// initial value.
pub fn run_flow(mesh0: &TriangulatedHypersurface, config: &FlowConfig) -> Result<FlowTrajectory> {
    config.validate()?;
    let report = geometry::validate_convex_mesh(mesh0)?;
    if !report.strictly_convex {
        return Err(Error::NotConvex { min_indicator: report.min_indicator });
    }
    let pattern = Arc::new(CsrPattern::from_topology(mesh0.topology_arc()));
    let area0 = mesh0.total_area();
    let stop_area = config.stop_area_fraction * area0;
    let mut t = 0.0;
    let mut mesh = mesh0.clone();
    let mut area = area0;
    let mut snapshots = vec![Snapshot { t, mesh: mesh.clone() }];
    let mut snap_area = area0;
    let mut log = vec![StepRecord { t, dt: 0.0, area, h_max: mesh.vertex_data().max_mean_curvature() }];
    let min_dt = config.dt0 * 0.5f64.powi(MAX_HALVINGS as i32);

    let mut steps = 0;
    while area > stop_area && steps < config.max_steps {
        let h_max = mesh.vertex_data().max_mean_curvature();
        let mut dt = config.dt0.min(config.safety / (h_max * h_max));
        if config.scheme == Scheme::Explicit {
            // Stability of the explicit surface heat step.
            dt = dt.min(0.25 * geometry::edge_metric(&mesh).min().powi(2));
        }
        let next = loop {
            let attempt = match config.scheme {
                Scheme::Explicit => mcf_step(&mesh, dt, Scheme::Explicit),
                Scheme::SemiImplicit => semi_implicit_positions(&mesh, &pattern, dt).and_then(|p| {
                    check_step(&mesh, &p)?;
                    TriangulatedHypersurface::with_topology(mesh.topology_arc().clone(), p)
                }),
            };
            match attempt {
                Ok(m) => break m,
                Err(Error::StepRejected(_)) | Err(Error::Degenerate { .. }) if dt > min_dt => dt *= 0.5,
                Err(e) => return Err(e),
            }
        };
        let new_area = next.total_area();
        if !(new_area < area) {
            return Err(Error::InvariantFailure(format!("area did not decrease at t = {t}")));
        }
        let convex: ConvexityReport = geometry::validate_convex_mesh(&next)?;
        t += dt;
        if !convex.strictly_convex {
            return Err(Error::ConvexityLost { t });
        }
        mesh = next;
        area = new_area;
        steps += 1;
        log.push(StepRecord { t, dt, area, h_max: mesh.vertex_data().max_mean_curvature() });
        if area <= snap_area * (1.0 - config.snapshot_area_step) || area <= stop_area {
            snapshots.push(Snapshot { t, mesh: mesh.clone() });
            snap_area = area;
        }
    }
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot { t, mesh: mesh.clone() });
    }
    let fallback = t + area / integral_h2(&mesh);
    let t_explosion = estimate_explosion(&log, area0, fallback);
    FlowTrajectory::assemble(snapshots, log, t_explosion, *config)
}

impl FlowTrajectory {
    fn assemble(snapshots: Vec<Snapshot>, log: Vec<StepRecord>, t_explosion: f64, config: FlowConfig) -> Result<Self> {
        let topology = snapshots[0].mesh.topology_arc().clone();
        let area0 = snapshots[0].mesh.total_area();
        let maps = (snapshots.len() >= 2).then(|| {
            let table: Vec<(f64, f64)> = log.iter().map(|r| (r.t, r.area)).collect();
            TimeMaps::from_log(area0, &table, t_explosion)
        });
        let h_max = snapshots.iter().map(|s| s.mesh.vertex_data().max_mean_curvature()).collect();
        let area = snapshots.iter().map(|s| s.mesh.total_area()).collect();
        let reach = snapshots.iter().map(|s| two_sweep_diameter(s.mesh.vertex_positions())).collect();
        Ok(Self { topology, snapshots, log, t_explosion, maps, config, h_max, area, reach })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn initial(&self) -> &TriangulatedHypersurface {
        &self.snapshots[0].mesh
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("at least one snapshot")
    }

    pub fn t_max(&self) -> f64 {
        self.last().t
    }

    pub fn step_log(&self) -> &[StepRecord] {
        &self.log
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    /// Extrapolated time at which the area reaches zero.
    pub fn explosion_time(&self) -> f64 {
        self.t_explosion
    }

    pub fn snapshot_areas(&self) -> &[f64] {
        &self.area
    }

    /// ψ, t̃ and τ tables.
    pub fn time_maps(&self) -> Result<&TimeMaps> {
        self.maps.as_ref().ok_or(Error::NotEnoughSnapshots { needed: 2, have: self.snapshots.len() })
    }

    fn bracket(&self, t: f64) -> Result<(usize, f64)> {
        let hi = self.t_max();
        if !(t >= 0.0 && t <= hi) {
            return Err(Error::OutOfRange { t, lo: 0.0, hi });
        }
        let i = self.snapshots.partition_point(|s| s.t <= t);
        if i >= self.snapshots.len() {
            return Ok((self.snapshots.len() - 1, 0.0));
        }
        let (a, b) = (&self.snapshots[i - 1], &self.snapshots[i]);
        Ok((i - 1, (t - a.t) / (b.t - a.t)))
    }

    /// Vertex-wise linear interpolation between bracketing snapshots.
    pub fn slice_view(&self, t: f64) -> Result<SliceView<'_>> {
        let (i, w) = self.bracket(t)?;
        let a = &self.snapshots[i].mesh;
        let b = if w > 0.0 { &self.snapshots[i + 1].mesh } else { a };
        Ok(SliceView { topology: &self.topology, pa: a.vertex_positions(), pb: b.vertex_positions(), w, t })
    }

    /// Slice `Tc - u` in backward time `u`.
    pub fn backward_view(&self, u: f64) -> Result<SliceView<'_>> {
        let t = self.t_explosion - u;
        self.slice_view(t).map_err(|_| {
            let (lo, hi) = self.backward_range();
            Error::OutOfRange { t: u, lo, hi }
        })
    }

    /// Admissible backward times.
    pub fn backward_range(&self) -> (f64, f64) {
        ((self.t_explosion - self.t_max()).max(0.0), self.t_explosion)
    }

    pub fn slice_at(&self, t: f64) -> Result<TriangulatedHypersurface> {
        let (i, w) = self.bracket(t)?;
        if w == 0.0 {
            return Ok(self.snapshots[i].mesh.clone());
        }
        self.slice_view(t)?.to_mesh()
    }

    /// Upper bound for the largest mean curvature on `[t_a, t_b]` read off the snapshots.
    pub fn h_max_between(&self, t_a: f64, t_b: f64) -> f64 {
        let (lo, hi) = (t_a.min(t_b), t_a.max(t_b));
        let mut best = 0.0f64;
        for (k, s) in self.snapshots.iter().enumerate() {
            let next_t = self.snapshots.get(k + 1).map(|n| n.t).unwrap_or(f64::INFINITY);
            if next_t >= lo && s.t <= hi {
                best = best.max(self.h_max[k]);
                if let Some(h) = self.h_max.get(k + 1) {
                    best = best.max(*h);
                }
            }
        }
        best
    }

    /// Lower bound for the diameter of the slice at flow time `t`; used to
    /// cap single walk lengths.
    pub fn diameter_bound(&self, t: f64) -> Result<f64> {
        let (i, w) = self.bracket(t)?;
        let next = if w > 0.0 { self.reach[i + 1] } else { self.reach[i] };
        Ok(self.reach[i].min(next))
    }

    /// Largest `max_v H` over the stored snapshots up to flow time `t`.
    pub fn h_max_at(&self, t: f64) -> f64 {
        self.h_max_between(t, t)
    }

    /// Writes a `manifest.json` and one OFF file per snapshot into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut files = Vec::with_capacity(self.snapshots.len());
        for (k, s) in self.snapshots.iter().enumerate() {
            let name = format!("snapshot_{k:05}.off");
            fs::write(dir.join(&name), to_off_string(s.mesh.vertex_positions(), self.topology.triangles()))?;
            files.push(name);
        }
        let manifest = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            t_explosion: self.t_explosion,
            times: self.snapshots.iter().map(|s| s.t).collect(),
            files,
            time_maps: self.maps.clone(),
            tau: self.maps.as_ref().map(|m| m.t_tilde.iter().map(|s| -s).collect()),
            step_log: self.log.clone(),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read trajectory manifest {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.times.len() != manifest.files.len() || manifest.times.is_empty() {
            return Err(Error::Parse { path, msg: "times and files disagree".into() });
        }
        let mut snapshots = Vec::with_capacity(manifest.files.len());
        let mut topology: Option<Arc<Topology>> = None;
        for (t, name) in manifest.times.iter().zip(&manifest.files) {
            let p = dir.join(name);
            let (verts, tris) = parse_off(&fs::read_to_string(&p)?).map_err(|msg| Error::Parse { path: p.clone(), msg })?;
            let mesh = match &topology {
                Some(topo) => {
                    if topo.triangles() != tris.as_slice() {
                        return Err(Error::Parse { path: p, msg: "connectivity differs between snapshots".into() });
                    }
                    TriangulatedHypersurface::with_topology(topo.clone(), verts)?
                }
                None => {
                    let m = TriangulatedHypersurface::new(verts, tris)?;
                    topology = Some(m.topology_arc().clone());
                    m
                }
            };
            snapshots.push(Snapshot { t: *t, mesh });
        }
        Self::assemble(snapshots, manifest.step_log, manifest.t_explosion, manifest.config)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    config: FlowConfig,
    t_explosion: f64,
    times: Vec<f64>,
    files: Vec<String>,
    time_maps: Option<TimeMaps>,
    tau: Option<Vec<f64>>,
    step_log: Vec<StepRecord>,
}

/// Lazily interpolated slice between two snapshots.
#[derive(Debug, Clone, Copy)]
pub struct SliceView<'a> {
    topology: &'a Topology,
    pa: &'a [Vec3],
    pb: &'a [Vec3],
    w: f64,
    /// Flow time of the slice.
    pub t: f64,
}

impl SliceView<'_> {
    pub fn to_mesh(&self) -> Result<TriangulatedHypersurface> {
        TriangulatedHypersurface::with_topology(Arc::new(self.topology.clone()), self.positions())
    }
}

impl Embedding for SliceView<'_> {
    fn topology(&self) -> &Topology {
        self.topology
    }

    fn position(&self, v: usize) -> Vec3 {
        if self.w == 0.0 {
            self.pa[v]
        } else {
            self.pa[v] * (1.0 - self.w) + self.pb[v] * self.w
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin::{ellipsoid, icosphere};
    use crate::sphere::SphereOracle;

    fn radii(m: &TriangulatedHypersurface) -> Vec<f64> {
        let c = m.centroid();
        m.vertex_positions().iter().map(|p| (p - c).norm()).collect()
    }

    #[test]
    fn explicit_step_matches_sphere_law() {
        let m = icosphere(4, 1.0).unwrap();
        let next = mcf_step(&m, 1e-4, Scheme::Explicit).unwrap();
        let expect = (1.0f64 - 4e-4).sqrt();
        for r in next.vertex_positions().iter().map(|p| p.norm()) {
            assert!((r - expect).abs() <= 1e-4, "{r} vs {expect}");
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let m = icosphere(2, 1.0).unwrap();
        for s in [Scheme::Explicit, Scheme::SemiImplicit] {
            assert_eq!(mcf_step(&m, 0.0, s).unwrap().vertex_positions(), m.vertex_positions());
        }
    }

    #[test]
    fn semi_implicit_step_shrinks_sphere() {
        let m = icosphere(3, 1.0).unwrap();
        let next = mcf_step(&m, 1e-3, Scheme::SemiImplicit).unwrap();
        let expect = (1.0f64 - 4e-3).sqrt();
        for r in radii(&next) {
            assert!((r - expect).abs() < 1e-3);
        }
    }

    #[test]
    fn huge_explicit_step_is_rejected() {
        let m = icosphere(3, 1.0).unwrap();
        let r = mcf_step(&m, 0.6, Scheme::Explicit);
        assert!(matches!(r, Err(Error::StepRejected(_))));
    }

    #[test]
    fn single_snapshot_when_stop_fraction_is_one() {
        let m = icosphere(2, 1.0).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(1e-3, 1.0)).unwrap();
        assert_eq!(traj.snapshots().len(), 1);
        assert!(matches!(traj.time_maps(), Err(Error::NotEnoughSnapshots { .. })));
        assert!((traj.explosion_time() - 0.25).abs() < 0.02);
    }

    #[test]
    fn coarse_sphere_flow_tracks_oracle() {
        let m = icosphere(3, 1.0).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(2e-4, 0.1)).unwrap();
        assert!((traj.explosion_time() - 0.25).abs() < 0.01 * 0.25, "{}", traj.explosion_time());
        let oracle = SphereOracle::new(1.0, 2).unwrap();
        for s in traj.snapshots().iter().filter(|s| s.t <= 0.9 * 0.25) {
            let r = oracle.radius(s.t).unwrap();
            for x in radii(&s.mesh) {
                assert!((x - r).abs() / r < 0.02);
            }
        }
        let areas = traj.snapshot_areas();
        assert!(areas.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.step_log().windows(2).all(|w| w[1].area < w[0].area && w[1].t > w[0].t));
    }

    #[test]
    fn time_maps_on_sphere() {
        let m = icosphere(3, 1.0).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(5e-4, 0.2)).unwrap();
        let maps = traj.time_maps().unwrap();
        assert_eq!(maps.t_tilde(0.0).unwrap(), 0.0);
        let tc = traj.explosion_time();
        let t = 0.75 * tc;
        let expect = -tc * (1.0 - t / tc).ln();
        assert!((maps.t_tilde(t).unwrap() - expect).abs() < 2e-3 * expect, "{} {}", maps.t_tilde(t).unwrap(), expect);
        for s in [0.05, 0.2, 0.3] {
            let back = maps.t_tilde(maps.t_tilde_inverse(s).unwrap()).unwrap();
            assert!((back - s).abs() < 1e-8);
        }
        let (lo, hi) = maps.u_range();
        for u in [lo + 0.01, 0.5 * (lo + hi), hi - 1e-3] {
            assert!((maps.tau_inverse(maps.tau(u).unwrap()).unwrap() - u).abs() < 1e-8);
        }
        assert!(maps.t_tilde.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn slice_interpolation() {
        let m = icosphere(2, 1.0).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(1e-3, 0.5)).unwrap();
        assert_eq!(traj.slice_at(0.0).unwrap().vertex_positions(), m.vertex_positions());
        let s1 = &traj.snapshots()[3];
        assert_eq!(traj.slice_at(s1.t).unwrap().vertex_positions(), s1.mesh.vertex_positions());
        assert!(traj.slice_at(traj.t_max() + 1e-3).is_err());
        assert!(traj.slice_at(-1e-9).is_err());
    }

    #[test]
    fn ellipsoid_becomes_rounder_and_nests() {
        let m = ellipsoid(1.0, 1.0, 1.5, 3).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(1e-3, 0.5)).unwrap();
        let extent_ratio = |m: &TriangulatedHypersurface| {
            let p = m.vertex_positions();
            let ext = |c: usize| {
                p.iter().map(|x| x[c]).fold(f64::NEG_INFINITY, f64::max)
                    - p.iter().map(|x| x[c]).fold(f64::INFINITY, f64::min)
            };
            let e = [ext(0), ext(1), ext(2)];
            e.iter().cloned().fold(0.0, f64::max) / e.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let later = traj.slice_at(0.1).unwrap();
        assert!(extent_ratio(&later) < extent_ratio(&m));
        for w in traj.snapshots().windows(2) {
            assert!(geometry::max_signed_distance(w[1].mesh.vertex_positions(), &w[0].mesh) < 0.0);
        }
        let d = m.diameter();
        assert!(traj.explosion_time() <= d * d / 4.0);
    }

    #[test]
    fn save_and_load_round_trip() {
        let m = icosphere(2, 1.0).unwrap();
        let traj = run_flow(&m, &FlowConfig::new(1e-3, 0.6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        traj.save(dir.path()).unwrap();
        let back = FlowTrajectory::load(dir.path()).unwrap();
        assert_eq!(back.snapshots().len(), traj.snapshots().len());
        assert_eq!(back.explosion_time(), traj.explosion_time());
        for (a, b) in back.snapshots().iter().zip(traj.snapshots()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.mesh.vertex_positions(), b.mesh.vertex_positions());
        }
    }
}
