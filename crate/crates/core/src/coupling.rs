//! Mirror (reflection) coupling of two walkers in the evolving metric, the
//! alternating independent/mirror schedule, and coalescence statistics.

use serde::{Deserialize, Serialize};

use crate::brownian::{path_noise, step_limit, GeneratorConvention, Noise, Walker};
use crate::error::{Error, Result};
use crate::flow::FlowTrajectory;
use crate::geodesic::{
    minimal_geodesic_with, parallel_transport, walk_straight, GeodesicOptions, GeodesicPath,
};
use crate::geometry::{self, edge_metric};
use crate::mesh::{Embedding, SurfacePoint, TangentVector, TriangulatedHypersurface};
use crate::parallel::par_map;
use crate::stats::{self, LineFit};

/// Safety factor applied to the injectivity proxy: discrete curvature is an
/// area average and slightly underestimates curvature peaks.
pub const INJECTIVITY_MARGIN: f64 = 0.98;

/// Conservative injectivity radius: the smaller of `π / sqrt(K_max)` and half
/// the shortest loop found by shooting geodesics from probe vertices.
pub fn injectivity_proxy(mesh: &TriangulatedHypersurface) -> Result<f64> {
    let report = geometry::validate_convex_mesh(mesh)?;
    if !report.strictly_convex {
        return Err(Error::NotConvex { min_indicator: report.min_indicator });
    }
    let k_max = geometry::gaussian_curvature(mesh).into_iter().fold(0.0, f64::max);
    let curvature_bound = std::f64::consts::PI / k_max.sqrt();
    let loop_bound = 0.5 * shortest_returning_geodesic(mesh, 6, 12)?;
    Ok(INJECTIVITY_MARGIN * curvature_bound.min(loop_bound))
}

/// Length of the shortest geodesic loop found from `probes` farthest-point
/// vertices in `directions` directions each (infinite if none returns).
pub fn shortest_returning_geodesic(mesh: &TriangulatedHypersurface, probes: usize, directions: usize) -> Result<f64> {
    let cells = stats::CellPartition::farthest_point(mesh, probes);
    let h = edge_metric(mesh).mean();
    let diam = mesh.diameter();
    let max_len = 2.0 * std::f64::consts::PI * diam;
    let topo = mesh.topology_arc();
    let mut best = f64::INFINITY;
    for &v in &cells.seeds {
        let p = SurfacePoint::at_vertex(topo, v);
        let x0 = mesh.point_position(&p);
        let frame = crate::mesh::triangle_frame(mesh, p.triangle);
        for d in 0..directions {
            let a = std::f64::consts::TAU * d as f64 / directions as f64;
            let mut dir = frame[0] * a.cos() + frame[1] * a.sin();
            let mut q = p;
            let (mut len, mut left) = (0.0, false);
            let mut prev = (f64::INFINITY, 0.0);
            while len < max_len.min(best) {
                let w = walk_straight(mesh, &q, &dir, h, &mut [])?;
                q = w.end;
                dir = w.direction;
                len += h;
                let r = (mesh.point_position(&q) - x0).norm();
                if r > 0.5 * diam {
                    left = true;
                }
                // First local minimum of the chord after leaving.
                if left && r > prev.0 && prev.0 < 2.0 * h {
                    best = best.min(prev.1);
                    break;
                }
                prev = (r, len);
            }
        }
    }
    Ok(best)
}

/// Transports `v` along the minimal geodesic from `x` to `y` and reflects it
/// in the hyperplane orthogonal to the arriving geodesic.
pub fn mirror_map<E: Embedding + ?Sized>(
    mesh: &E,
    x: &SurfacePoint,
    y: &SurfacePoint,
    v: &TangentVector,
    max_distance: f64,
    opts: &GeodesicOptions,
) -> Result<TangentVector> {
    let g = minimal_geodesic_with(mesh, x, y, opts)?;
    if g.length > max_distance {
        return Err(Error::TooFar { distance: g.length, limit: max_distance });
    }
    mirror_along(mesh, &g, v)
}

/// Mirror map along a precomputed geodesic.
pub fn mirror_along<E: Embedding + ?Sized>(mesh: &E, g: &GeodesicPath, v: &TangentVector) -> Result<TangentVector> {
    let w = parallel_transport(mesh, g, v)?;
    let e = g.end_tangent;
    Ok(TangentVector { base: w.base, vector: w.vector - e * (2.0 * w.vector.dot(&e)) })
}

/// Schedule parameters. Distances are compared in the area-normalized
/// metric `ψ(t)² g(t)`, so thresholds measured on the initial surface stay
/// meaningful as the slices shrink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    /// Mirror engages at normalized distance `<= theta`.
    pub theta: f64,
    /// Mirror disengages above `theta_far`.
    pub theta_far: f64,
    /// Longest mirror phase, in normalized time `t̃`.
    pub phase_cap: f64,
    pub inj_proxy: f64,
    /// Coalescence radius as a multiple of the slice's mean edge length.
    pub coalescence_edges: f64,
    pub dt: f64,
    pub conv: GeneratorConvention,
}

impl CouplingConfig {
    /// `theta = inj / 4`, `theta_far = inj / 2`, phase cap `1/2`, coalescence
    /// radius two mean edges.
    pub fn from_proxy(inj_proxy: f64, dt: f64, conv: GeneratorConvention) -> Self {
        Self {
            theta: inj_proxy / 4.0,
            theta_far: inj_proxy / 2.0,
            phase_cap: 0.5,
            inj_proxy,
            coalescence_edges: 2.0,
            dt,
            conv,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.theta
            && self.theta < self.theta_far
            && self.theta_far <= self.inj_proxy
            && self.phase_cap > 0.0
            && self.coalescence_edges > 0.0
            && self.dt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::BadParams(format!("invalid coupling configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Independent,
    Mirror,
    Coalesced,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeInterval {
    pub regime: Regime,
    pub start: f64,
    pub end: f64,
}

/// One sample of the distance series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub u: f64,
    pub regime: Regime,
    /// Intrinsic distance on the slice, or the chord (a lower bound) when
    /// the pair is clearly beyond the active threshold.
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingRun {
    pub timeline: Vec<RegimeInterval>,
    /// Regime switching times.
    pub stopping_times: Vec<f64>,
    pub coupling_time: Option<f64>,
    pub distances: Vec<DistanceSample>,
    pub z1: SurfacePoint,
    pub z3: SurfacePoint,
    /// Longest mirror phase in normalized time.
    pub longest_mirror_phase: f64,
}

struct Schedule<'a> {
    traj: &'a FlowTrajectory,
    opts: GeodesicOptions,
    /// Mean edge length per snapshot.
    mean_edge: Vec<f64>,
}

impl Schedule<'_> {
    /// Mean edge length of the slice, interpolated between snapshots.
    fn mean_edge(&self, u: f64) -> f64 {
        let t = self.traj.explosion_time() - u;
        let snaps = self.traj.snapshots();
        let k = snaps.partition_point(|s| s.t <= t).clamp(1, snaps.len().max(2) - 1);
        if snaps.len() < 2 {
            return self.mean_edge[0];
        }
        let (ta, tb) = (snaps[k - 1].t, snaps[k].t);
        let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        self.mean_edge[k - 1] * (1.0 - w) + self.mean_edge[k] * w
    }

    fn psi(&self, u: f64) -> Result<f64> {
        self.traj.time_maps()?.psi(self.traj.explosion_time() - u)
    }

    fn t_tilde(&self, u: f64) -> Result<f64> {
        self.traj.time_maps()?.t_tilde(self.traj.explosion_time() - u)
    }
}

/// Reflection-coupled step: `z1` takes its Gaussian increment, `z3` takes
/// its mirror image. Returns the geodesic used.
pub fn coupled_step<E: Embedding + ?Sized, N: Noise>(
    mesh: &E,
    max_length: f64,
    z1: &mut Walker,
    z3: &mut Walker,
    dt: f64,
    conv: GeneratorConvention,
    noise: &mut N,
    opts: &GeodesicOptions,
) -> Result<GeodesicPath> {
    let g = minimal_geodesic_with(mesh, &z1.point, &z3.point, opts)?;
    let [e1, e2] = z1.frame_vectors(mesh);
    let [g1, g2] = noise.gaussian_pair();
    let xi = (e1 * g1 + e2 * g2) * (2.0 * conv.c * dt).sqrt();
    let m = mirror_along(mesh, &g, &TangentVector { base: z1.point, vector: xi })?;
    z1.advance(mesh, &xi, max_length)?;
    z3.advance(mesh, &m.vector, max_length)?;
    Ok(g)
}

fn independent_step<E: Embedding + ?Sized, N: Noise>(
    mesh: &E,
    max_length: f64,
    z1: &mut Walker,
    z3: &mut Walker,
    dt: f64,
    conv: GeneratorConvention,
    noise: &mut N,
) -> Result<()> {
    crate::brownian::gtbm_step_on(mesh, max_length, z1, dt, conv, noise)?;
    crate::brownian::gtbm_step_on(mesh, max_length, z3, dt, conv, noise)?;
    Ok(())
}

/// Runs the alternating schedule on backward times `[u0, u1]`.
pub fn run_coupling_schedule<N: Noise>(
    traj: &FlowTrajectory,
    cfg: &CouplingConfig,
    start1: SurfacePoint,
    start3: SurfacePoint,
    u0: f64,
    u1: f64,
    noise: &mut N,
) -> Result<CouplingRun> {
    cfg.validate()?;
    let sched = Schedule {
        traj,
        opts: GeodesicOptions { ambiguity_min_length: f64::INFINITY, ..Default::default() },
        mean_edge: traj.snapshots().iter().map(|s| edge_metric(&s.mesh).mean()).collect(),
    };
    let view0 = traj.backward_view(u0)?;
    let mut z1 = Walker::new(&view0, start1);
    let mut z3 = Walker::new(&view0, start3);
    let n = ((u1 - u0) / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if n > 0 { (u1 - u0) / n as f64 } else { 0.0 };
    let mut run = CouplingRun {
        timeline: vec![],
        stopping_times: vec![],
        coupling_time: None,
        distances: Vec::with_capacity(n + 1),
        z1: start1,
        z3: start3,
        longest_mirror_phase: 0.0,
    };
    let mut regime = Regime::Independent;
    let mut since = u0;
    let mut phase_tt = 0.0;
    let switch = |run: &mut CouplingRun, from: Regime, at: f64, since: &mut f64| {
        run.timeline.push(RegimeInterval { regime: from, start: *since, end: at });
        run.stopping_times.push(at);
        *since = at;
    };
    let mut u = u0;
    for k in 0..=n {
        let view = traj.backward_view(u)?;
        let psi = sched.psi(u)?;
        // Regime update from the current state.
        let mut geo: Option<f64> = None;
        if regime != Regime::Coalesced {
            let chord = (view.point_position(&z1.point) - view.point_position(&z3.point)).norm();
            let delta_c = cfg.coalescence_edges * sched.mean_edge(u);
            // The chord bounds the intrinsic distance from below, so the
            // geodesic is only needed near the active threshold.
            let gate = if regime == Regime::Independent { cfg.theta } else { cfg.theta_far };
            let needs_geodesic = chord * psi <= gate;
            let d = if needs_geodesic {
                minimal_geodesic_with(&view, &z1.point, &z3.point, &sched.opts)?.length
            } else {
                chord
            };
            geo = Some(d);
            if regime == Regime::Independent && d * psi <= cfg.theta {
                switch(&mut run, regime, u, &mut since);
                regime = Regime::Mirror;
                phase_tt = sched.t_tilde(u)?;
            }
            if regime == Regime::Mirror {
                let elapsed = phase_tt - sched.t_tilde(u)?;
                run.longest_mirror_phase = run.longest_mirror_phase.max(elapsed);
                // End the phase before a step would carry it past the cap.
                let next = if k < n { phase_tt - sched.t_tilde((u + dt).min(u1))? } else { elapsed };
                if d <= delta_c {
                    switch(&mut run, regime, u, &mut since);
                    regime = Regime::Coalesced;
                    run.coupling_time = Some(u);
                    z3 = z1;
                } else if d * psi > cfg.theta_far || next > cfg.phase_cap {
                    switch(&mut run, regime, u, &mut since);
                    regime = Regime::Independent;
                }
            }
        }
        run.distances.push(DistanceSample {
            u,
            regime,
            distance: if regime == Regime::Coalesced { 0.0 } else { geo.unwrap_or(0.0) },
        });
        if k == n {
            break;
        }
        let um = u + 0.5 * dt;
        let mid = traj.backward_view(um)?;
        let limit = step_limit(traj, um)?;
        match regime {
            Regime::Coalesced => {
                crate::brownian::gtbm_step_on(&mid, limit, &mut z1, dt, cfg.conv, noise)?;
                z3 = z1;
            }
            Regime::Independent => independent_step(&mid, limit, &mut z1, &mut z3, dt, cfg.conv, noise)?,
            Regime::Mirror => {
                match coupled_step(&mid, limit, &mut z1, &mut z3, dt, cfg.conv, noise, &sched.opts) {
                    Ok(_) => {}
                    Err(Error::AmbiguousGeodesic { .. }) => {
                        independent_step(&mid, limit, &mut z1, &mut z3, dt, cfg.conv, noise)?
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        u = if k + 1 == n { u1 } else { u + dt };
    }
    run.timeline.push(RegimeInterval { regime, start: since, end: u1 });
    run.z1 = z1.point;
    run.z3 = z3.point;
    Ok(run)
}

/// Parallel batch of schedule runs, stream `i` for run `i`.
pub fn coupling_batch(
    traj: &FlowTrajectory,
    cfg: &CouplingConfig,
    start1: SurfacePoint,
    start3: SurfacePoint,
    window: (f64, f64),
    runs: usize,
    seed: u64,
) -> Result<Vec<CouplingRun>> {
    par_map(runs, |i| {
        let mut noise = path_noise(seed, i as u64);
        run_coupling_schedule(traj, cfg, start1, start3, window.0, window.1, &mut noise)
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayTable {
    pub window_lengths: Vec<f64>,
    pub no_coalescence: Vec<f64>,
    /// Fit of `ln P` against window length over entries with `P > 0`.
    pub log_fit: Option<LineFit>,
    pub runs: usize,
}

/// `P(no coalescence within k)` for each window length `k` from the start.
pub fn tv_decay_from_runs(runs: &[CouplingRun], u0: f64, window_lengths: &[f64]) -> Result<DecayTable> {
    if runs.len() < 10 {
        return Err(Error::InsufficientRuns { needed: 10, got: runs.len() });
    }
    let n = runs.len() as f64;
    let no_coalescence: Vec<f64> = window_lengths
        .iter()
        .map(|&k| runs.iter().filter(|r| r.coupling_time.map_or(true, |t| t > u0 + k)).count() as f64 / n)
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) =
        window_lengths.iter().zip(&no_coalescence).filter(|(_, p)| **p > 0.0).map(|(k, p)| (*k, p.ln())).unzip();
    let log_fit = (x.len() >= 3).then(|| stats::linear_fit(&x, &y));
    Ok(DecayTable { window_lengths: window_lengths.to_vec(), no_coalescence, log_fit, runs: runs.len() })
}

/// Runs `runs` couplings over the longest window and tabulates the decay.
pub fn tv_decay_estimate(
    traj: &FlowTrajectory,
    cfg: &CouplingConfig,
    start1: SurfacePoint,
    start3: SurfacePoint,
    u0: f64,
    window_lengths: &[f64],
    runs: usize,
    seed: u64,
) -> Result<DecayTable> {
    if runs < 10 {
        return Err(Error::InsufficientRuns { needed: 10, got: runs });
    }
    let longest = window_lengths.iter().cloned().fold(0.0, f64::max);
    let batch = coupling_batch(traj, cfg, start1, start3, (u0, u0 + longest), runs, seed)?;
    tv_decay_from_runs(&batch, u0, window_lengths)
}

fn comparison_mu(r: f64, n: usize, eps: f64) -> Result<f64> {
    if n < 2 || !(eps < 1.0) || !(r > 0.0) {
        return Err(Error::DomainError(format!("comparison function needs n >= 2, eps < 1, r > 0 (got {n}, {eps}, {r})")));
    }
    let mu = ((1.0 - eps) / (n as f64 - 1.0)).sqrt();
    if !(mu * r < std::f64::consts::PI) || (mu * r).sin().abs() < 1e-12 {
        return Err(Error::DomainError(format!("sin(mu r) vanishes for mu r = {}", mu * r)));
    }
    Ok(mu)
}

/// `G(s) = cos(μs) + tan(μr/2) sin(μs)`, `μ = sqrt((1-ε)/(n-1))`: the
/// solution of `G'' + μ² G = 0` with `G(0) = G(r) = 1`.
pub fn comparison_g(s: f64, r: f64, n: usize, eps: f64) -> Result<f64> {
    let mu = comparison_mu(r, n, eps)?;
    if !(0.0..=r).contains(&s) {
        return Err(Error::DomainError(format!("s = {s} outside [0, {r}]")));
    }
    let k = (1.0 - (mu * r).cos()) / (mu * r).sin();
    Ok((mu * s).cos() + k * (mu * s).sin())
}

/// Derivative `G'(s)`.
pub fn comparison_g_dot(s: f64, r: f64, n: usize, eps: f64) -> Result<f64> {
    let mu = comparison_mu(r, n, eps)?;
    let k = (1.0 - (mu * r).cos()) / (mu * r).sin();
    Ok(-mu * (mu * s).sin() + mu * k * (mu * s).cos())
}

/// `G'(r) - G'(0) = -2μ tan(μr/2)`.
pub fn comparison_g_dot_jump(r: f64, n: usize, eps: f64) -> Result<f64> {
    let mu = comparison_mu(r, n, eps)?;
    Ok(-2.0 * mu * (0.5 * mu * r).tan())
}
