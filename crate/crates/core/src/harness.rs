//! Experiment runner behind the command line tool: configurations, artifact
//! files with embedded provenance, and the verification suite.
//!
//! Every experiment returns a [`Verdict`] listing its in-run checks. Output
//! files never contain timings or paths of the output directory, so equal
//! configurations give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::brownian::{
    birthless_ensemble, ensemble, martingale_qv_test, pushforward_y, sphere_time_change_check, uniform_times,
    EnsembleConfig, GeneratorConvention,
};
use crate::coupling::{
    comparison_g, comparison_g_dot, comparison_g_dot_jump, coupling_batch, injectivity_proxy, mirror_map,
    tv_decay_from_runs, CouplingConfig, Regime,
};
use crate::density::{l1_distance, solve_with_summary, uniqueness_experiment, DensityField, DensitySolver};
use crate::error::{Error, Result};
use crate::flow::{run_flow, FlowConfig, FlowTrajectory, Scheme};
use crate::geodesic::GeodesicOptions;
use crate::geometry;
use crate::mesh::builtin::{icosphere, BuiltinMesh};
use crate::mesh::io::load_mesh;
use crate::mesh::{Embedding, SurfacePoint, TangentVector, Topology, TriangulatedHypersurface, Vec3};
use crate::sphere::SphereOracle;
use crate::stats::CellPartition;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Where an initial surface comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum MeshSource {
    File { path: PathBuf },
    Builtin { mesh: BuiltinMesh },
}

impl MeshSource {
    pub fn load(&self) -> Result<TriangulatedHypersurface> {
        match self {
            MeshSource::File { path } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("mesh file {} not found", path.display())));
                }
                load_mesh(path)
            }
            MeshSource::Builtin { mesh } => mesh.build(),
        }
    }
}

/// Parses `b0,b1,b2@tT` (barycentric point in triangle `T`), `vV` or `V`
/// (vertex `V`).
pub fn parse_start(topology: &Topology, s: &str) -> Result<SurfacePoint> {
    let bad = |why: &str| Error::Config(format!("cannot parse start point {s:?}: {why}"));
    let s = s.trim();
    if let Some((bary, tri)) = s.split_once('@') {
        let t: usize = tri.trim().trim_start_matches('t').parse().map_err(|_| bad("triangle index"))?;
        if t >= topology.n_triangles() {
            return Err(bad("triangle out of range"));
        }
        let b: Vec<f64> = bary.split(',').map(|x| x.trim().parse()).collect::<std::result::Result<_, _>>().map_err(|_| bad("barycentric coordinates"))?;
        if b.len() != 3 {
            return Err(bad("need three barycentric coordinates"));
        }
        return SurfacePoint::new(t, [b[0], b[1], b[2]]).map_err(|e| bad(&e.to_string()));
    }
    let v: usize = s.trim_start_matches('v').parse().map_err(|_| bad("vertex index"))?;
    if v >= topology.n_vertices() {
        return Err(bad("vertex out of range"));
    }
    Ok(SurfacePoint::at_vertex(topology, v))
}

/// Parses `a:b` into an increasing pair.
pub fn parse_window(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("cannot parse window {s:?} (expected a:b)"));
    let (a, b) = s.split_once(':').ok_or_else(bad)?;
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if !(a < b) {
        return Err(bad());
    }
    Ok((a, b))
}

pub fn load_trajectory(dir: &Path) -> Result<FlowTrajectory> {
    if !dir.join("manifest.json").is_file() {
        return Err(Error::Config(format!("no trajectory manifest in {}", dir.display())));
    }
    FlowTrajectory::load(dir)
}

/// One in-run check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `"<="`, `">="` or `"flag"`.
    pub relation: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: "<=".into(), pass: value <= bound }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, relation: ">=".into(), pass: value >= bound }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: ok as u8 as f64, bound: 1.0, relation: "flag".into(), pass: ok }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn extend(&mut self, other: Verdict) {
        self.checks.extend(other.checks);
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes files that all carry the same provenance header.
struct Artifacts {
    dir: PathBuf,
    header: serde_json::Value,
}

impl Artifacts {
    fn new(dir: &Path, experiment: &str, conv: Option<GeneratorConvention>, config: &impl Serialize) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let header = serde_json::json!({
            "tool": "shrinkflow",
            "version": VERSION,
            "experiment": experiment,
            "convention": conv.map(|c| serde_json::json!({ "c": c.c, "name": c.name() })),
            "config": serde_json::to_value(config)?,
        });
        Ok(Self { dir: dir.to_path_buf(), header })
    }

    fn json(&self, name: &str, body: &impl Serialize) -> Result<()> {
        let doc = serde_json::json!({ "header": self.header, "result": serde_json::to_value(body)? });
        fs::write(self.dir.join(name), serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }

    fn csv(&self, name: &str, columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut out = format!("# {}\n{}\n", serde_json::to_string(&self.header)?, columns.join(","));
        for r in rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        fs::write(self.dir.join(name), out)?;
        Ok(())
    }

    fn verdict(&self, v: &Verdict) -> Result<()> {
        self.json("checks.json", v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowExperiment {
    pub mesh: MeshSource,
    pub dt0: f64,
    pub stop_area_fraction: f64,
    pub scheme: Scheme,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowSummary {
    pub explosion_time: f64,
    /// `diam(M₀)² / 2n`.
    pub explosion_bound: f64,
    pub diameter: f64,
    pub snapshots: usize,
    pub steps: usize,
    pub t_max: f64,
}

pub fn explosion_bound(mesh: &TriangulatedHypersurface) -> f64 {
    mesh.diameter().powi(2) / (2.0 * 2.0)
}

/// Runs the flow and stores the trajectory in `out`.
pub fn run_flow_experiment(cfg: &FlowExperiment, out: &Path) -> Result<Verdict> {
    let mesh = cfg.mesh.load()?;
    let flow_cfg = FlowConfig { dt0: cfg.dt0, stop_area_fraction: cfg.stop_area_fraction, scheme: cfg.scheme, ..Default::default() };
    let traj = run_flow(&mesh, &flow_cfg)?;
    traj.save(out)?;
    let art = Artifacts::new(out, "flow", None, cfg)?;
    art.csv(
        "flow.csv",
        &["t", "dt", "area", "h_max"],
        traj.step_log().iter().map(|r| vec![num(r.t), num(r.dt), num(r.area), num(r.h_max)]),
    )?;
    let summary = FlowSummary {
        explosion_time: traj.explosion_time(),
        explosion_bound: explosion_bound(&mesh),
        diameter: mesh.diameter(),
        snapshots: traj.snapshots().len(),
        steps: traj.step_log().len(),
        t_max: traj.t_max(),
    };
    art.json("flow.json", &summary)?;
    let mut v = Verdict::default();
    v.push(Check::at_most("explosion time below diam^2/2n", summary.explosion_time, summary.explosion_bound));
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateExperiment {
    pub traj: PathBuf,
    pub start: String,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub paths: usize,
    /// Number of equal sampling intervals in `[t0, t1]`.
    pub samples: usize,
    pub conv: GeneratorConvention,
    pub seed: u64,
}

pub fn run_simulate(cfg: &SimulateExperiment, out: &Path) -> Result<Verdict> {
    let traj = load_trajectory(&cfg.traj)?;
    let start = parse_start(traj.topology(), &cfg.start)?;
    if !(cfg.t0 < cfg.t1) || cfg.samples == 0 {
        return Err(Error::Config("need t0 < t1 and at least one sampling interval".into()));
    }
    let times = uniform_times(cfg.t0, cfg.t1, cfg.samples);
    let ens = EnsembleConfig { paths: cfg.paths, dt: cfg.dt, conv: cfg.conv, seed: cfg.seed };
    let paths = ensemble(&traj, start, cfg.t0, &times, &ens, 0)?;
    let art = Artifacts::new(out, "simulate", Some(cfg.conv), cfg)?;
    let mut rows = Vec::with_capacity(paths.len() * times.len());
    for (i, p) in paths.iter().enumerate() {
        for (u, q) in p.times.iter().zip(&p.points) {
            let x = traj.backward_view(*u)?.point_position(q);
            rows.push(vec![
                i.to_string(),
                num(*u),
                num(x.x),
                num(x.y),
                num(x.z),
                q.triangle.to_string(),
                num(q.bary[0]),
                num(q.bary[1]),
                num(q.bary[2]),
            ]);
        }
    }
    art.csv("paths.csv", &["path_id", "t", "x", "y", "z", "triangle", "b0", "b1", "b2"], rows)?;
    let mut v = Verdict::default();
    if cfg.paths >= 100 && cfg.samples >= 2 {
        let amb: Vec<_> = paths.iter().map(|p| pushforward_y(&traj, p)).collect::<Result<_>>()?;
        let report = martingale_qv_test(&amb, cfg.conv, 2)?;
        let slope_err = (report.qv_fit.slope / report.expected_qv_slope - 1.0).abs();
        v.push(Check::at_most("quadratic variation slope relative error", slope_err, 0.05));
        v.push(Check::at_most("max |Y| within initial diameter", report.max_norm, traj.initial().diameter()));
        if cfg.conv == GeneratorConvention::ONE {
            v.push(Check::at_most("max |drift z-score|", report.max_abs_z, 3.0));
        }
        art.json("martingale.json", &report)?;
    }
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthlessExperiment {
    pub traj: PathBuf,
    pub start: String,
    pub eps: Vec<f64>,
    pub t_star: f64,
    pub paths: usize,
    pub dt: f64,
    pub cells: usize,
    pub conv: GeneratorConvention,
    pub seed: u64,
}

pub fn run_birthless(cfg: &BirthlessExperiment, out: &Path) -> Result<Verdict> {
    let traj = load_trajectory(&cfg.traj)?;
    let start = parse_start(traj.topology(), &cfg.start)?;
    let cells = CellPartition::farthest_point(traj.initial(), cfg.cells);
    let ens = EnsembleConfig { paths: cfg.paths, dt: cfg.dt, conv: cfg.conv, seed: cfg.seed };
    let report = birthless_ensemble(&traj, start, &cfg.eps, cfg.t_star, &ens, &cells)?;
    let art = Artifacts::new(out, "birthless", Some(cfg.conv), cfg)?;
    let mut rows = vec![];
    for (e, law) in report.eps.iter().zip(&report.cell_laws) {
        for (c, p) in law.iter().enumerate() {
            rows.push(vec![num(*e), c.to_string(), num(*p)]);
        }
    }
    art.csv("birthless.csv", &["eps", "cell", "probability"], rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        eps: &'a [f64],
        t_star: f64,
        cells: usize,
        tv_consecutive: &'a [f64],
        tv_uniform: &'a [f64],
    }
    art.json(
        "birthless.json",
        &Summary {
            eps: &report.eps,
            t_star: report.t_star,
            cells: cells.n_cells(),
            tv_consecutive: &report.tv_consecutive,
            tv_uniform: &report.tv_uniform,
        },
    )?;
    let mut v = Verdict::default();
    v.push(Check::flag(
        "total variation between consecutive birth times decreases",
        report.tv_consecutive.windows(2).all(|w| w[1] < w[0]),
    ));
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleExperiment {
    pub traj: PathBuf,
    pub start_a: String,
    pub start_b: String,
    pub window: (f64, f64),
    pub runs: usize,
    pub dt: f64,
    pub conv: GeneratorConvention,
    pub seed: u64,
    /// Overrides `inj / 4`.
    pub theta: Option<f64>,
    pub coalescence_edges: f64,
    /// Number of nested windows in the decay table.
    pub decay_points: usize,
    /// Keep every `record_stride`-th distance sample in `runs.csv`.
    pub record_stride: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoupleSummary {
    pub inj_proxy: f64,
    pub coupling: CouplingConfig,
    pub coalescence_radius_start: f64,
    pub coalescence_radius_end: f64,
    pub runs: usize,
    pub coupled: usize,
    pub coupling_probability: f64,
    pub longest_mirror_phase: f64,
    pub decay: crate::coupling::DecayTable,
}

fn coupling_config(traj: &FlowTrajectory, cfg_theta: Option<f64>, dt: f64, conv: GeneratorConvention, edges: f64) -> Result<CouplingConfig> {
    let inj = injectivity_proxy(traj.initial())?;
    let mut c = CouplingConfig::from_proxy(inj, dt, conv);
    if let Some(t) = cfg_theta {
        c.theta = t;
        c.theta_far = 2.0 * t;
    }
    c.coalescence_edges = edges;
    c.validate()?;
    Ok(c)
}

pub fn run_couple(cfg: &CoupleExperiment, out: &Path) -> Result<Verdict> {
    let traj = load_trajectory(&cfg.traj)?;
    let a = parse_start(traj.topology(), &cfg.start_a)?;
    let b = parse_start(traj.topology(), &cfg.start_b)?;
    let cc = coupling_config(&traj, cfg.theta, cfg.dt, cfg.conv, cfg.coalescence_edges)?;
    let runs = coupling_batch(&traj, &cc, a, b, cfg.window, cfg.runs, cfg.seed)?;
    let art = Artifacts::new(out, "couple", Some(cfg.conv), cfg)?;
    let stride = cfg.record_stride.max(1);
    let mut rows = vec![];
    for (i, r) in runs.iter().enumerate() {
        let last = r.distances.len().saturating_sub(1);
        for (k, d) in r.distances.iter().enumerate() {
            if k % stride == 0 || k == last {
                let regime = match d.regime {
                    Regime::Independent => "independent",
                    Regime::Mirror => "mirror",
                    Regime::Coalesced => "coalesced",
                };
                rows.push(vec![i.to_string(), num(d.u), regime.into(), num(d.distance)]);
            }
        }
    }
    art.csv("runs.csv", &["run", "t", "regime", "distance"], rows)?;
    let lengths: Vec<f64> = (1..=cfg.decay_points.max(1))
        .map(|k| (cfg.window.1 - cfg.window.0) * k as f64 / cfg.decay_points.max(1) as f64)
        .collect();
    let decay = tv_decay_from_runs(&runs, cfg.window.0, &lengths)?;
    let coupled = runs.iter().filter(|r| r.coupling_time.is_some()).count();
    let edge = |u: f64| -> Result<f64> { Ok(cfg.coalescence_edges * geometry::edge_metric(&traj.backward_view(u)?).mean()) };
    let summary = CoupleSummary {
        inj_proxy: cc.inj_proxy,
        coupling: cc,
        coalescence_radius_start: edge(cfg.window.0)?,
        coalescence_radius_end: edge(cfg.window.1)?,
        runs: runs.len(),
        coupled,
        coupling_probability: coupled as f64 / runs.len() as f64,
        longest_mirror_phase: runs.iter().map(|r| r.longest_mirror_phase).fold(0.0, f64::max),
        decay,
    };
    art.json("couple.json", &summary)?;
    let mut v = Verdict::default();
    let absorbing = runs.iter().all(|r| match r.coupling_time {
        Some(t) => r.distances.iter().filter(|d| d.u >= t).all(|d| d.distance == 0.0 && d.regime == Regime::Coalesced),
        None => r.distances.iter().all(|d| d.regime != Regime::Coalesced),
    });
    v.push(Check::flag("coalescence is absorbing", absorbing));
    v.push(Check::at_most("longest mirror phase", summary.longest_mirror_phase, cc.phase_cap));
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvDecayExperiment {
    pub traj: PathBuf,
    pub start_a: String,
    pub start_b: String,
    pub u0: f64,
    pub lengths: Vec<f64>,
    pub runs: usize,
    pub dt: f64,
    pub conv: GeneratorConvention,
    pub seed: u64,
}

pub fn run_tv_decay(cfg: &TvDecayExperiment, out: &Path) -> Result<Verdict> {
    let traj = load_trajectory(&cfg.traj)?;
    let a = parse_start(traj.topology(), &cfg.start_a)?;
    let b = parse_start(traj.topology(), &cfg.start_b)?;
    let cc = coupling_config(&traj, None, cfg.dt, cfg.conv, 2.0)?;
    let table = crate::coupling::tv_decay_estimate(&traj, &cc, a, b, cfg.u0, &cfg.lengths, cfg.runs, cfg.seed)?;
    let art = Artifacts::new(out, "tv-decay", Some(cfg.conv), cfg)?;
    art.csv(
        "decay.csv",
        &["window_length", "p_no_coalescence"],
        table.window_lengths.iter().zip(&table.no_coalescence).map(|(k, p)| vec![num(*k), num(*p)]),
    )?;
    art.json("decay.json", &table)?;
    let mut v = Verdict::default();
    let mut order: Vec<usize> = (0..table.window_lengths.len()).collect();
    order.sort_by(|&i, &j| table.window_lengths[i].total_cmp(&table.window_lengths[j]));
    v.push(Check::flag(
        "no-coalescence probability non-increasing in window length",
        order.windows(2).all(|w| table.no_coalescence[w[1]] <= table.no_coalescence[w[0]]),
    ));
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeExperiment {
    pub traj: PathBuf,
    /// `uniform`, `delta:V` or a CSV file with columns `vertex,h`.
    pub init: String,
    pub eps: f64,
    /// End time; defaults to the top of the trajectory's backward range.
    pub until: Option<f64>,
    pub dt: f64,
    pub conv: GeneratorConvention,
    /// Write the field every this many steps (and at the end).
    pub record_every: usize,
}

fn initial_density(traj: &FlowTrajectory, init: &str, eps: f64) -> Result<DensityField> {
    if init == "uniform" {
        return DensityField::uniform(traj, eps);
    }
    if let Some(v) = init.strip_prefix("delta:") {
        let v: usize = v.trim().parse().map_err(|_| Error::Config(format!("bad vertex in {init:?}")))?;
        return DensityField::delta(traj, eps, v).map_err(|e| Error::Config(e.to_string()));
    }
    let path = Path::new(init);
    if !path.is_file() {
        return Err(Error::Config(format!("initial density {init:?} is neither uniform, delta:V nor a file")));
    }
    let text = fs::read_to_string(path)?;
    let mut values = vec![0.0; traj.topology().n_vertices()];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let mut it = line.split(',');
        let (Some(a), Some(b)) = (it.next(), it.next()) else {
            return Err(Error::Parse { path: path.into(), msg: format!("bad line {line:?}") });
        };
        let Ok(v) = a.trim().parse::<usize>() else { continue };
        let h: f64 = b.trim().parse().map_err(|_| Error::Parse { path: path.into(), msg: format!("bad value in {line:?}") })?;
        *values.get_mut(v).ok_or_else(|| Error::Parse { path: path.into(), msg: format!("vertex {v} out of range") })? = h;
    }
    DensityField::normalized(traj, eps, values)
}

/// Writes `out` (CSV) and a JSON summary next to it.
pub fn run_pde(cfg: &PdeExperiment, out: &Path) -> Result<Verdict> {
    let traj = load_trajectory(&cfg.traj)?;
    let h0 = initial_density(&traj, &cfg.init, cfg.eps)?;
    let until = cfg.until.unwrap_or(traj.backward_range().1);
    let solver = DensitySolver::new(&traj, cfg.conv);
    let every = cfg.record_every.max(1);
    let mut rows = vec![];
    let push = |h: &DensityField, rows: &mut Vec<Vec<String>>| {
        for (k, (x, a)) in h.values.iter().zip(&h.measure).enumerate() {
            rows.push(vec![num(h.u), k.to_string(), num(*x), num(*a)]);
        }
    };
    push(&h0, &mut rows);
    let mut step = 0usize;
    let (mut drift, mut min_h) = (0.0f64, h0.min());
    let end = solver.evolve(&h0, until, cfg.dt, |h| {
        step += 1;
        drift = drift.max((h.mass() - 1.0).abs());
        min_h = min_h.min(h.min());
        if step % every == 0 {
            push(h, &mut rows);
        }
    })?;
    if step % every != 0 {
        push(&end, &mut rows);
    }
    let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = out.file_name().ok_or_else(|| Error::Config("output path has no file name".into()))?.to_string_lossy().to_string();
    let art = Artifacts::new(dir, "pde", Some(cfg.conv), cfg)?;
    art.csv(&name, &["t", "vertex", "h", "area"], rows)?;
    let stem = name.strip_suffix(".csv").unwrap_or(&name).to_string();
    #[derive(Serialize)]
    struct Summary {
        steps: usize,
        final_time: f64,
        max_mass_drift: f64,
        min_value: f64,
    }
    art.json(&format!("{stem}.json"), &Summary { steps: step, final_time: end.u, max_mass_drift: drift, min_value: min_h })?;
    let mut v = Verdict::default();
    v.push(Check::at_most("relative mass drift", drift, 1e-6));
    v.push(Check::at_least("minimum density", min_h, -1e-12));
    art.json(&format!("{stem}.checks.json"), &v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereCheckExperiment {
    pub subdiv: u32,
    pub dt0: f64,
    pub paths: usize,
    pub dt: f64,
    pub seed: u64,
}

/// Sphere flow radius error and explosion time against the closed form.
pub fn sphere_flow_errors(traj: &FlowTrajectory, r0: f64, upto_fraction: f64) -> Result<(f64, f64)> {
    let oracle = SphereOracle::new(r0, 2)?;
    let tc = oracle.explosion_time();
    let mut worst = 0.0f64;
    for s in traj.snapshots().iter().filter(|s| s.t <= upto_fraction * tc) {
        let r = oracle.radius(s.t)?;
        for p in s.mesh.vertex_positions() {
            worst = worst.max((p.norm() / r - 1.0).abs());
        }
    }
    Ok((worst, (traj.explosion_time() / tc - 1.0).abs()))
}

/// Largest relative deviation of a uniform solve from `1/(4π·4u)`, and the
/// largest spread around the vertex mean, over `[u0, u1]`.
pub fn sphere_uniform_profile(traj: &FlowTrajectory, u0: f64, u1: f64, dt: f64) -> Result<(f64, f64)> {
    let h = DensityField::uniform(traj, u0)?;
    let (mut exact, mut spread) = (0.0f64, 0.0f64);
    DensitySolver::new(traj, GeneratorConvention::HALF).evolve(&h, u1, dt, |f| {
        let ex = 1.0 / (4.0 * std::f64::consts::PI * 4.0 * f.u);
        let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
        for x in &f.values {
            exact = exact.max((x / ex - 1.0).abs());
            spread = spread.max((x / mean - 1.0).abs());
        }
    })?;
    Ok((exact, spread))
}

pub fn run_sphere_check(cfg: &SphereCheckExperiment, out: &Path) -> Result<Verdict> {
    let mesh = icosphere(cfg.subdiv, 1.0)?;
    let traj = run_flow(&mesh, &FlowConfig::new(cfg.dt0, 0.02))?;
    let tc = traj.explosion_time();
    let art = Artifacts::new(out, "sphere-check", Some(GeneratorConvention::ONE), cfg)?;
    let mut v = Verdict::default();
    let (radius_err, tc_err) = sphere_flow_errors(&traj, 1.0, 0.9)?;
    v.push(Check::at_most("radius relative error up to 0.9 Tc", radius_err, 0.01));
    v.push(Check::at_most("explosion time relative error", tc_err, 0.01));
    let oracle = SphereOracle::new(1.0, 2)?;
    let ens = EnsembleConfig { paths: cfg.paths, dt: cfg.dt, conv: GeneratorConvention::ONE, seed: cfg.seed };
    let tcr = sphere_time_change_check(&traj, &oracle, (0.1 * tc, 0.9 * tc), 8, &ens, SurfacePoint::centroid(0))?;
    v.push(Check::at_least("time-changed angle KS p-value", tcr.angle_ks.p_value, 0.01));
    v.push(Check::at_most(
        "time-changed quadratic variation slope relative error",
        (tcr.qv_slope_s / tcr.expected_qv_slope_s - 1.0).abs(),
        0.05,
    ));
    let ratio_err = tcr.local_ratio.iter().zip(&tcr.oracle_ratio).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    v.push(Check::at_most("local quadratic variation ratio relative error", ratio_err, 0.05));
    let (exact, spread) = sphere_uniform_profile(&traj, 0.05 * tc, traj.backward_range().1, 1e-4)?;
    v.push(Check::at_most("uniform density spread", spread, 0.005));
    art.json(
        "sphere_check.json",
        &serde_json::json!({
            "explosion_time": tc,
            "radius_error": radius_err,
            "time_change": tcr,
            "uniform_profile_error": exact,
            "uniform_profile_spread": spread,
        }),
    )?;
    art.verdict(&v)?;
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyExperiment {
    pub quick: bool,
    pub seed: u64,
}

struct Scale {
    subdiv: u32,
    flow_dt: f64,
    paths: usize,
    bm_dt: f64,
    runs: usize,
    /// Vertex spread of a uniform density; grows on coarse meshes.
    spread: f64,
}

/// Runs the whole suite at desk scale (`quick`: subdivision 3, a few hundred
/// paths) and writes one row per check.
pub fn run_verify_all(cfg: &VerifyExperiment, out: &Path) -> Result<Verdict> {
    let sc = if cfg.quick {
        Scale { subdiv: 3, flow_dt: 2e-4, paths: 1000, bm_dt: 2e-4, runs: 50, spread: 0.01 }
    } else {
        Scale { subdiv: 4, flow_dt: 1e-4, paths: 2000, bm_dt: 1e-4, runs: 100, spread: 0.005 }
    };
    let art = Artifacts::new(out, "verify-all", Some(GeneratorConvention::ONE), cfg)?;
    let mut v = Verdict::default();

    // Flow and its closed forms.
    let sphere = icosphere(sc.subdiv, 1.0)?;
    let traj = run_flow(&sphere, &FlowConfig::new(sc.flow_dt, 0.01))?;
    let tc = traj.explosion_time();
    let (radius_err, tc_err) = sphere_flow_errors(&traj, 1.0, 0.9)?;
    v.push(Check::at_most("flow: radius relative error up to 0.9 Tc", radius_err, if cfg.quick { 0.02 } else { 0.01 }));
    v.push(Check::at_most("flow: explosion time relative error", tc_err, 0.01));
    v.push(Check::at_most("flow: sphere explosion bound", tc, explosion_bound(&sphere)));
    let ell = BuiltinMesh::Ellipsoid { a: 1.0, b: 1.0, c: 1.5, subdiv: sc.subdiv - 1 }.build()?;
    let ell_traj = run_flow(&ell, &FlowConfig::new(sc.flow_dt, 0.5))?;
    v.push(Check::at_most("flow: ellipsoid explosion bound", ell_traj.explosion_time(), explosion_bound(&ell)));
    art.csv(
        "flow.csv",
        &["t", "dt", "area", "h_max"],
        traj.step_log().iter().map(|r| vec![num(r.t), num(r.dt), num(r.area), num(r.h_max)]),
    )?;

    // Discrete mean curvature on the round sphere.
    let mut h_err = vec![];
    for k in [sc.subdiv - 1, sc.subdiv] {
        let m = icosphere(k, 1.0)?;
        let d = m.vertex_data();
        h_err.push(d.mean_curvature.iter().map(|h| (h / 2.0 - 1.0).abs()).fold(0.0, f64::max));
        let worst_angle = d
            .laplacian
            .iter()
            .zip(&d.normal)
            .zip(m.vertex_positions())
            .map(|((l, _), p)| (l.dot(p) / (l.norm() * p.norm())).clamp(-1.0, 1.0).acos().to_degrees())
            .fold(180.0, f64::min);
        v.push(Check::at_least(&format!("curvature: angle(ΔF, outward normal) at subdivision {k}"), worst_angle, 179.0));
    }
    v.push(Check::flag("curvature: error decreases under refinement", h_err[1] < h_err[0]));

    // Martingale and quadratic variation.
    let ens = EnsembleConfig { paths: sc.paths, dt: sc.bm_dt, conv: GeneratorConvention::ONE, seed: cfg.seed };
    let times = uniform_times(0.1 * tc, 0.9 * tc, 8);
    let paths = ensemble(&traj, SurfacePoint::at_vertex(traj.topology(), 0), times[0], &times, &ens, 0)?;
    let amb: Vec<_> = paths.iter().map(|p| pushforward_y(&traj, p)).collect::<Result<_>>()?;
    let mart = martingale_qv_test(&amb, GeneratorConvention::ONE, 2)?;
    v.push(Check::at_most("martingale: max |drift z-score|", mart.max_abs_z, 3.0));
    v.push(Check::at_most(
        "martingale: quadratic variation slope relative error",
        (mart.qv_fit.slope / mart.expected_qv_slope - 1.0).abs(),
        0.05,
    ));
    v.push(Check::at_most("martingale: max |Y| within initial diameter", mart.max_norm, sphere.diameter()));
    art.csv(
        "martingale.csv",
        &["window", "z_x", "z_y", "z_z"],
        mart.drift_z_scores.iter().enumerate().map(|(i, z)| vec![i.to_string(), num(z[0]), num(z[1]), num(z[2])]),
    )?;

    // Time change to constant-metric motion.
    let oracle = SphereOracle::new(1.0, 2)?;
    let tcr = sphere_time_change_check(&traj, &oracle, (0.1 * tc, 0.9 * tc), 8, &ens, SurfacePoint::centroid(0))?;
    v.push(Check::at_least("time change: angle KS p-value", tcr.angle_ks.p_value, 0.01));
    v.push(Check::at_most(
        "time change: quadratic variation slope relative error",
        (tcr.qv_slope_s / tcr.expected_qv_slope_s - 1.0).abs(),
        0.05,
    ));
    let ratio_err = tcr.local_ratio.iter().zip(&tcr.oracle_ratio).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    v.push(Check::at_most("time change: local ratio relative error", ratio_err, 0.05));

    // Mirror map isometry.
    let opts = GeodesicOptions::default();
    let mut iso = 0.0f64;
    let n_tri = sphere.topology().n_triangles();
    for k in 0..20usize {
        let x = SurfacePoint::new((k * 37) % n_tri, [0.2, 0.3, 0.5])?;
        let y = SurfacePoint::new((k * 101 + 11) % n_tri, [0.6, 0.3, 0.1])?;
        let vec = TangentVector::new(&sphere, x, Vec3::new(1.0, -2.0, 0.5 + k as f64 * 0.1));
        match mirror_map(&sphere, &x, &y, &vec, f64::INFINITY, &opts) {
            Ok(w) => iso = iso.max((w.vector.norm() - vec.vector.norm()).abs()),
            Err(Error::AmbiguousGeodesic { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    v.push(Check::at_most("coupling: mirror map isometry defect", iso, 1e-10));

    // Comparison function.
    let mut g_err = 0.0f64;
    for (r, n, eps) in [(1.0, 2usize, 0.0), (0.7, 3, 0.3), (2.0, 5, -0.4)] {
        g_err = g_err.max((comparison_g(0.0, r, n, eps)? - 1.0).abs()).max((comparison_g(r, r, n, eps)? - 1.0).abs());
        let jump = comparison_g_dot(r, r, n, eps)? - comparison_g_dot(0.0, r, n, eps)?;
        g_err = g_err.max((jump - comparison_g_dot_jump(r, n, eps)?).abs());
    }
    v.push(Check::at_most("comparison function: boundary and jump defect", g_err, 1e-12));

    // Coupling schedule.
    let pos = sphere.vertex_positions();
    let far = (0..pos.len()).max_by(|&i, &j| (pos[i] - pos[0]).norm().total_cmp(&(pos[j] - pos[0]).norm())).unwrap();
    let cc = coupling_config(&traj, None, sc.bm_dt, GeneratorConvention::ONE, 2.0)?;
    let a = SurfacePoint::at_vertex(traj.topology(), 0);
    let b = SurfacePoint::at_vertex(traj.topology(), far);
    let runs = coupling_batch(&traj, &cc, a, b, (0.1 * tc, 0.5 * tc), sc.runs, cfg.seed)?;
    let absorbing = runs.iter().all(|r| match r.coupling_time {
        Some(t) => r.distances.iter().filter(|d| d.u >= t).all(|d| d.distance == 0.0),
        None => true,
    });
    v.push(Check::flag("coupling: coalescence is absorbing", absorbing));
    let longest = runs.iter().map(|r| r.longest_mirror_phase).fold(0.0, f64::max);
    v.push(Check::at_most("coupling: longest mirror phase", longest, cc.phase_cap));
    art.csv(
        "coupling.csv",
        &["run", "coupling_time", "mirror_phases"],
        runs.iter().enumerate().map(|(i, r)| {
            vec![
                i.to_string(),
                r.coupling_time.map_or("none".into(), num),
                r.timeline.iter().filter(|p| p.regime == Regime::Mirror).count().to_string(),
            ]
        }),
    )?;

    // Backward density equation.
    let eps = 0.05 * tc;
    let hi = traj.backward_range().1;
    let (_, spread) = sphere_uniform_profile(&traj, eps, hi, 2e-4)?;
    v.push(Check::at_most("density: uniform profile spread", spread, sc.spread));
    let delta = DensityField::delta(&traj, eps, 0)?;
    let (end, summary) = solve_with_summary(&traj, &delta, 0.9 * tc, 2e-4, GeneratorConvention::HALF)?;
    v.push(Check::at_most("density: relative mass drift", summary.max_mass_drift, 1e-6));
    v.push(Check::at_least("density: minimum value", summary.min_value.iter().cloned().fold(f64::INFINITY, f64::min), -1e-12));
    let uni = DensityField::uniform(&traj, eps)?;
    let l1 = uniqueness_experiment(&traj, &delta, &uni, 0.9 * tc, 2e-4, GeneratorConvention::HALF)?;
    v.push(Check::flag("density: L1 distance non-increasing", l1.non_increasing()));
    let uni_end = DensityField::uniform(&traj, end.u)?;
    art.csv(
        "density.csv",
        &["t", "l1"],
        l1.times.iter().zip(&l1.l1).step_by(10).map(|(t, d)| vec![num(*t), num(*d)]),
    )?;

    art.json(
        "verify.json",
        &serde_json::json!({
            "explosion_time": tc,
            "martingale": mart,
            "time_change": tcr,
            "coupled": runs.iter().filter(|r| r.coupling_time.is_some()).count(),
            "density_final_l1_to_uniform": l1_distance(&end, &uni_end),
            "checks": v,
        }),
    )?;
    art.csv(
        "checks.csv",
        &["name", "value", "relation", "bound", "pass"],
        v.checks.iter().map(|c| vec![format!("{:?}", c.name), num(c.value), c.relation.clone(), num(c.bound), c.pass.to_string()]),
    )?;
    Ok(v)
}

/// Writes the machine-readable failure report.
pub fn write_failure_report(out: &Path, v: &Verdict) -> Result<()> {
    fs::create_dir_all(out)?;
    let failed: Vec<&Check> = v.failures();
    fs::write(out.join("failures.json"), serde_json::to_string_pretty(&serde_json::json!({ "failed": failed }))? + "\n")?;
    Ok(())
}

/// Merges verdicts of sub-experiments.
pub fn merge(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut v = Verdict::default();
    for x in verdicts {
        v.extend(x);
    }
    v
}
