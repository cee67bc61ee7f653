//! Backward density equation `∂_u h + H² h = c Δ h` on the evolving mesh,
//! where `u` is backward time (slice `Tc - u`).
//!
//! The scheme is implicit Euler in conservative weak form,
//! `(A₁ + dt c K₁) h₁ = A₀ h₀`, with lumped areas `A` and cotangent
//! stiffness `K` assembled on the arriving slice. The potential term is
//! carried by the change of lumped area between slices: in the continuum
//! `∂_u dμ = H² dμ`, so adding `dt A₁ H² h₁` on top would count it twice.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::brownian::{gtbm_step, path_rng, EnsembleConfig, GeneratorConvention, RngNoise, Walker};
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geometry::{self, cotangents};
use crate::linalg::{pcg, CsrMatrix, CsrPattern};
use crate::mesh::{Embedding, SurfacePoint};
use crate::parallel::par_map;
use crate::stats::{self, CellPartition};

/// Relative residual demanded from each solve.
pub const SOLVER_TOL: f64 = 1e-12;
/// Residual above which a solve counts as failed.
pub const FAILURE_RESIDUAL: f64 = 1e-10;
/// Below this many paths the Monte Carlo comparison is flagged.
pub const MIN_RELIABLE_PATHS: usize = 1000;

/// Per-vertex density against the lumped area measure of slice `Tc - u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub u: f64,
    pub values: Vec<f64>,
    pub measure: Vec<f64>,
}

impl DensityField {
    /// Wraps `values` and rescales them to unit mass on the slice at `u`.
    pub fn normalized(traj: &FlowTrajectory, u: f64, values: Vec<f64>) -> Result<Self> {
        let measure = geometry::mixed_areas(&traj.backward_view(u)?);
        if values.len() != measure.len() {
            return Err(Error::BadParams(format!("{} values for {} vertices", values.len(), measure.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::BadParams("density values must be finite and nonnegative".into()));
        }
        let mass: f64 = values.iter().zip(&measure).map(|(h, a)| h * a).sum();
        if !(mass > 0.0) {
            return Err(Error::BadParams("density has zero mass".into()));
        }
        Ok(Self { u, values: values.into_iter().map(|h| h / mass).collect(), measure })
    }

    pub fn uniform(traj: &FlowTrajectory, u: f64) -> Result<Self> {
        Self::normalized(traj, u, vec![1.0; traj.topology().n_vertices()])
    }

    /// All mass on vertex `v`.
    pub fn delta(traj: &FlowTrajectory, u: f64, v: usize) -> Result<Self> {
        let n = traj.topology().n_vertices();
        if v >= n {
            return Err(Error::BadParams(format!("vertex {v} out of range ({n} vertices)")));
        }
        let mut values = vec![0.0; n];
        values[v] = 1.0;
        Self::normalized(traj, u, values)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().zip(&self.measure).map(|(h, a)| h * a).sum()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Vertex masses `h_v a_v`.
    pub fn vertex_mass(&self) -> Vec<f64> {
        self.values.iter().zip(&self.measure).map(|(h, a)| h * a).collect()
    }
}

/// `‖a - b‖` in `L¹` of the measure of `a`.
pub fn l1_distance(a: &DensityField, b: &DensityField) -> f64 {
    a.values.iter().zip(&b.values).zip(&a.measure).map(|((x, y), m)| (x - y).abs() * m).sum()
}

/// Operators on one slice.
#[derive(Debug, Clone)]
pub struct Operators {
    pub stiffness: CsrMatrix,
    pub mass: Vec<f64>,
    /// `H²` per vertex.
    pub potential: Vec<f64>,
    /// All cotangent edge weights are nonnegative, so implicit steps keep
    /// positivity for every `dt`.
    pub nonnegative_weights: bool,
}

fn nonnegative_weights<E: Embedding + ?Sized>(mesh: &E) -> bool {
    let topo = mesh.topology();
    let mut w = std::collections::HashMap::with_capacity(topo.edges().len());
    for t in 0..topo.n_triangles() {
        let tri = topo.triangle(t);
        let cot = cotangents(mesh, t);
        for c in 0..3 {
            let (a, b) = (tri[(c + 1) % 3], tri[(c + 2) % 3]);
            *w.entry((a.min(b), a.max(b))).or_insert(0.0) += 0.5 * cot[c];
        }
    }
    w.values().all(|x| *x >= -1e-14)
}

/// Stiffness, lumped mass and potential on the slice at backward time `u`.
pub fn assemble(traj: &FlowTrajectory, u: f64) -> Result<Operators> {
    let view = traj.backward_view(u)?;
    let pattern = Arc::new(CsrPattern::from_topology(traj.topology()));
    let data = geometry::mean_curvature_data(&view)?;
    Ok(Operators {
        stiffness: geometry::stiffness(&view, &pattern),
        potential: data.mean_curvature.iter().map(|h| h * h).collect(),
        mass: data.area,
        nonnegative_weights: nonnegative_weights(&view),
    })
}

/// Time stepper sharing one sparsity pattern across steps.
pub struct DensitySolver<'a> {
    traj: &'a FlowTrajectory,
    pattern: Arc<CsrPattern>,
    conv: GeneratorConvention,
}

impl<'a> DensitySolver<'a> {
    pub fn new(traj: &'a FlowTrajectory, conv: GeneratorConvention) -> Self {
        Self { traj, pattern: Arc::new(CsrPattern::from_topology(traj.topology())), conv }
    }

    /// One implicit step of length `dt` from `h.u`.
    pub fn step(&self, h: &DensityField, dt: f64) -> Result<DensityField> {
        if !(dt >= 0.0) {
            return Err(Error::BadParams(format!("time step must be nonnegative, got {dt}")));
        }
        if dt == 0.0 {
            return Ok(h.clone());
        }
        let u1 = h.u + dt;
        let view = self.traj.backward_view(u1)?;
        let mass = geometry::mixed_areas(&view);
        let system = geometry::stiffness(&view, &self.pattern).scaled_plus_diagonal(dt * self.conv.c, &mass);
        let rhs = h.vertex_mass();
        let mut x = h.values.clone();
        let n = x.len();
        match pcg(&system, &rhs, &mut x, SOLVER_TOL, 20 * n) {
            Ok(_) => {}
            Err(Error::SolverFailure { residual, iterations }) if residual > FAILURE_RESIDUAL => {
                return Err(Error::SolverFailure { residual, iterations })
            }
            Err(Error::SolverFailure { .. }) => {}
            Err(e) => return Err(e),
        }
        Ok(DensityField { u: u1, values: x, measure: mass })
    }

    /// Steps from `h.u` to `u1` with steps no longer than `dt`, calling
    /// `visit` after every step.
    pub fn evolve(
        &self,
        h: &DensityField,
        u1: f64,
        dt: f64,
        mut visit: impl FnMut(&DensityField),
    ) -> Result<DensityField> {
        if !(dt > 0.0) || u1 < h.u {
            return Err(Error::BadParams(format!("cannot step from {} to {u1} with dt {dt}", h.u)));
        }
        let n = ((u1 - h.u) / dt - 1e-9).ceil().max(0.0) as usize;
        let step = if n > 0 { (u1 - h.u) / n as f64 } else { 0.0 };
        let mut cur = h.clone();
        for k in 0..n {
            let d = if k + 1 == n { u1 - cur.u } else { step };
            cur = self.step(&cur, d)?;
            visit(&cur);
        }
        Ok(cur)
    }
}

/// Single step without a cached pattern.
pub fn step_density(traj: &FlowTrajectory, h: &DensityField, dt: f64, conv: GeneratorConvention) -> Result<DensityField> {
    DensitySolver::new(traj, conv).step(h, dt)
}

/// Mass and positivity along one solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub min_value: Vec<f64>,
    pub max_mass_drift: f64,
}

pub fn solve_with_summary(
    traj: &FlowTrajectory,
    h0: &DensityField,
    u1: f64,
    dt: f64,
    conv: GeneratorConvention,
) -> Result<(DensityField, SolveSummary)> {
    let m0 = h0.mass();
    let mut s = SolveSummary { times: vec![h0.u], mass: vec![m0], min_value: vec![h0.min()], max_mass_drift: 0.0 };
    let end = DensitySolver::new(traj, conv).evolve(h0, u1, dt, |h| {
        let m = h.mass();
        s.times.push(h.u);
        s.mass.push(m);
        s.min_value.push(h.min());
        s.max_mass_drift = s.max_mass_drift.max((m - m0).abs() / m0);
    })?;
    Ok((end, s))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    /// Largest step-to-step increase of the distance (0 when monotone).
    pub max_increase: f64,
}

impl UniquenessReport {
    pub fn non_increasing(&self) -> bool {
        self.max_increase <= 0.0
    }

    /// Distance at the first recorded time `>= u`.
    pub fn distance_at(&self, u: f64) -> Option<f64> {
        self.times.iter().position(|&t| t >= u - 1e-12).map(|i| self.l1[i])
    }
}

/// Evolves two densities from the same time and records their `L¹` gap.
pub fn uniqueness_experiment(
    traj: &FlowTrajectory,
    h_a: &DensityField,
    h_b: &DensityField,
    u1: f64,
    dt: f64,
    conv: GeneratorConvention,
) -> Result<UniquenessReport> {
    if (h_a.u - h_b.u).abs() > 1e-12 {
        return Err(Error::BadParams("both densities must start at the same time".into()));
    }
    for h in [h_a, h_b] {
        if (h.mass() - 1.0).abs() > 1e-6 {
            return Err(Error::BadParams(format!("initial density has mass {}", h.mass())));
        }
    }
    let solver = DensitySolver::new(traj, conv);
    let mut a = h_a.clone();
    let mut b = h_b.clone();
    let mut report = UniquenessReport { times: vec![a.u], l1: vec![l1_distance(&a, &b)], max_increase: 0.0 };
    let n = ((u1 - a.u) / dt - 1e-9).ceil().max(0.0) as usize;
    let step = if n > 0 { (u1 - a.u) / n as f64 } else { 0.0 };
    for k in 0..n {
        let d = if k + 1 == n { u1 - a.u } else { step };
        a = solver.step(&a, d)?;
        b = solver.step(&b, d)?;
        let l = l1_distance(&a, &b);
        report.max_increase = report.max_increase.max(l - report.l1.last().unwrap());
        report.times.push(a.u);
        report.l1.push(l);
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeynmanKacReport {
    pub eps: f64,
    pub t_star: f64,
    pub convention: GeneratorConvention,
    pub paths: usize,
    pub n_cells: usize,
    pub pde_cells: Vec<f64>,
    pub mc_cells: Vec<f64>,
    /// Total variation between the cell laws.
    pub tv_cells: f64,
    /// Total variation between per-vertex laws; dominated by sampling noise
    /// of order `sqrt(V / N)` unless `N >> V`.
    pub tv_vertices: f64,
    pub warning: Option<String>,
}

/// Samples a vertex index from the vertex masses with one uniform draw.
fn sample_vertex(cumulative: &[f64], x: f64) -> usize {
    let target = x * cumulative.last().unwrap();
    cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
}

/// Compares the solved density at `t_star` with the law of walkers started
/// from `h_eps dμ` at `h_eps.u`.
pub fn feynman_kac_check(
    traj: &FlowTrajectory,
    h_eps: &DensityField,
    t_star: f64,
    pde_dt: f64,
    cfg: &EnsembleConfig,
    cells: &CellPartition,
) -> Result<FeynmanKacReport> {
    if !(t_star > h_eps.u) {
        return Err(Error::BadParams(format!("t_star {t_star} must follow the start {}", h_eps.u)));
    }
    let (h_star, _) = solve_with_summary(traj, h_eps, t_star, pde_dt, cfg.conv)?;
    let mut cumulative = h_eps.vertex_mass();
    for i in 1..cumulative.len() {
        cumulative[i] += cumulative[i - 1];
    }
    let topo = traj.topology().clone();
    let u0 = h_eps.u;
    let ends = par_map(cfg.paths, |i| {
        let mut rng = path_rng(cfg.seed, (3u64 << 32) | i as u64);
        let v = sample_vertex(&cumulative, rng.gen::<f64>());
        let mut noise = RngNoise(rng);
        let mut w = Walker::new(&traj.backward_view(u0)?, SurfacePoint::at_vertex(&topo, v));
        let n = ((t_star - u0) / cfg.dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t_star - u0) / n as f64;
        for k in 0..n {
            gtbm_step(traj, u0 + k as f64 * h, &mut w, h, cfg.conv, &mut noise)?;
        }
        Ok(w.point)
    })?;
    let mut counts = vec![0.0; topo.n_vertices()];
    for p in &ends {
        counts[stats::nearest_vertex(&topo, p)] += 1.0 / ends.len() as f64;
    }
    let pde_vertices = h_star.vertex_mass();
    let total: f64 = pde_vertices.iter().sum();
    let pde_vertices: Vec<f64> = pde_vertices.iter().map(|m| m / total).collect();
    let pde_cells = cells.aggregate(&pde_vertices);
    let mc_cells = cells.aggregate(&counts);
    let warning = (cfg.paths < MIN_RELIABLE_PATHS).then(|| {
        Error::InsufficientPaths { needed: MIN_RELIABLE_PATHS, got: cfg.paths }.to_string()
    });
    Ok(FeynmanKacReport {
        eps: u0,
        t_star,
        convention: cfg.conv,
        paths: cfg.paths,
        n_cells: cells.n_cells(),
        tv_cells: stats::total_variation(&pde_cells, &mc_cells),
        tv_vertices: stats::total_variation(&pde_vertices, &counts),
        pde_cells,
        mc_cells,
        warning,
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

    const HALF: GeneratorConvention = GeneratorConvention::HALF;

    #[test]
    fn assembly_basics() {
        let traj = sphere_traj();
        let u = 0.5 * traj.explosion_time();
        let ops = assemble(traj, u).unwrap();
        assert!(ops.stiffness.row_sums().iter().all(|s| s.abs() < 1e-12));
        let area = traj.backward_view(u).unwrap().to_mesh().unwrap().total_area();
        assert!((ops.mass.iter().sum::<f64>() - area).abs() < 1e-12 * area);
        // H = 2 / r with r² = 4u.
        let expect = 4.0 / (4.0 * u);
        assert!(ops.potential.iter().all(|p| (p / expect - 1.0).abs() < 0.02));
        assert!(ops.nonnegative_weights);
    }

    #[test]
    fn zero_step_is_identity_and_mass_is_conserved() {
        let traj = sphere_traj();
        let h = DensityField::delta(traj, 0.1, 5).unwrap();
        assert_eq!(step_density(traj, &h, 0.0, HALF).unwrap(), h);
        let h1 = step_density(traj, &h, 1e-3, HALF).unwrap();
        assert!((h1.mass() - h.mass()).abs() < 1e-8);
        assert!(h1.min() >= -1e-12);
        assert!(matches!(step_density(traj, &h, -1.0, HALF), Err(Error::BadParams(_))));
    }

    #[test]
    fn identical_starts_stay_identical() {
        let traj = sphere_traj();
        let h = DensityField::delta(traj, 0.05, 0).unwrap();
        let r = uniqueness_experiment(traj, &h, &h, 0.08, 5e-3, HALF).unwrap();
        assert!(r.l1.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn sampler_follows_masses() {
        let c = [0.1, 0.1, 0.6, 1.0];
        assert_eq!(sample_vertex(&c, 0.05), 0);
        assert_eq!(sample_vertex(&c, 0.3), 2);
        assert_eq!(sample_vertex(&c, 0.99), 3);
    }

    #[test]
    fn small_ensembles_are_flagged() {
        let traj = sphere_traj();
        let h = DensityField::uniform(traj, 0.1).unwrap();
        let cells = CellPartition::farthest_point(traj.initial(), 8);
        let cfg = EnsembleConfig { paths: 100, dt: 1e-3, conv: HALF, seed: 1 };
        let r = feynman_kac_check(traj, &h, 0.12, 1e-3, &cfg, &cells).unwrap();
        assert!(r.warning.is_some());
        assert!((r.pde_cells.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
