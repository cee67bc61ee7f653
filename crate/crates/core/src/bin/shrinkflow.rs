use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shrinkflow::brownian::GeneratorConvention;
use shrinkflow::flow::Scheme;
use shrinkflow::harness::{self, MeshSource, Verdict};
use shrinkflow::mesh::builtin::BuiltinMesh;
use shrinkflow::parallel::init_pool;
use shrinkflow::Error;

/// Mean curvature flow, evolving-metric Brownian motion, mirror coupling and
/// the backward density equation on convex triangle meshes.
#[derive(Parser)]
#[command(name = "shrinkflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the flow and store the trajectory.
    Flow {
        /// OFF or OBJ file.
        #[arg(long, conflicts_with = "builtin")]
        mesh: Option<PathBuf>,
        /// `icosphere:SUBDIV[:R]` or `ellipsoid:A,B,C[:SUBDIV]`.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long = "stop-area", default_value_t = 0.05)]
        stop_area: f64,
        #[arg(long)]
        explicit: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample Brownian paths in the evolving metric.
    Simulate {
        #[arg(long)]
        traj: PathBuf,
        /// `b0,b1,b2@tT` or a vertex `vV`.
        #[arg(long)]
        start: String,
        #[arg(long)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value = "half")]
        conv: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Laws at a fixed time of processes born ever later at one point.
    Birthless {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        start: String,
        /// Comma-separated birth times.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long = "t-star")]
        t_star: f64,
        #[arg(long, default_value_t = 5000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value_t = 32)]
        cells: usize,
        #[arg(long, default_value = "half")]
        conv: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mirror-coupling runs over a window of backward time.
    Couple {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long = "start-a")]
        start_a: String,
        #[arg(long = "start-b")]
        start_b: String,
        /// `u0:u1`.
        #[arg(long)]
        window: String,
        #[arg(long, default_value_t = 500)]
        runs: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value = "half")]
        conv: String,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long = "coalescence-edges", default_value_t = 2.0)]
        coalescence_edges: f64,
        #[arg(long = "decay-points", default_value_t = 8)]
        decay_points: usize,
        #[arg(long = "record-stride", default_value_t = 10)]
        record_stride: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probability of no coalescence against window length.
    TvDecay {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long = "start-a")]
        start_a: String,
        #[arg(long = "start-b")]
        start_b: String,
        #[arg(long)]
        u0: f64,
        /// Comma-separated window lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<f64>,
        #[arg(long, default_value_t = 500)]
        runs: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value = "half")]
        conv: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the backward density equation.
    Pde {
        #[arg(long)]
        traj: PathBuf,
        /// `uniform`, `delta:V` or a CSV file of `vertex,h`.
        #[arg(long)]
        init: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        until: Option<f64>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long, default_value = "half")]
        conv: String,
        #[arg(long = "record-every", default_value_t = 100)]
        record_every: usize,
        /// Output CSV; a JSON summary is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Round-sphere checks against closed forms.
    SphereCheck {
        #[arg(long, default_value_t = 4)]
        subdiv: u32,
        #[arg(long, default_value_t = 5e-5)]
        dt0: f64,
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the verification suite.
    VerifyAll {
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn conv(s: &str) -> shrinkflow::Result<GeneratorConvention> {
    GeneratorConvention::parse(s)
}

fn run(command: Command) -> shrinkflow::Result<(Verdict, PathBuf)> {
    Ok(match command {
        Command::Flow { mesh, builtin, dt, stop_area, explicit, out } => {
            let source = match (mesh, builtin) {
                (Some(path), None) => MeshSource::File { path },
                (None, Some(spec)) => MeshSource::Builtin { mesh: BuiltinMesh::parse(&spec)? },
                _ => return Err(Error::Config("give exactly one of --mesh or --builtin".into())),
            };
            let cfg = harness::FlowExperiment {
                mesh: source,
                dt0: dt,
                stop_area_fraction: stop_area,
                scheme: if explicit { Scheme::Explicit } else { Scheme::SemiImplicit },
            };
            (harness::run_flow_experiment(&cfg, &out)?, out)
        }
        Command::Simulate { traj, start, t0, t1, dt, paths, samples, conv: c, seed, out } => {
            let cfg = harness::SimulateExperiment { traj, start, t0, t1, dt, paths, samples, conv: conv(&c)?, seed };
            (harness::run_simulate(&cfg, &out)?, out)
        }
        Command::Birthless { traj, start, eps, t_star, paths, dt, cells, conv: c, seed, out } => {
            let cfg = harness::BirthlessExperiment { traj, start, eps, t_star, paths, dt, cells, conv: conv(&c)?, seed };
            (harness::run_birthless(&cfg, &out)?, out)
        }
        Command::Couple {
            traj,
            start_a,
            start_b,
            window,
            runs,
            dt,
            conv: c,
            theta,
            coalescence_edges,
            decay_points,
            record_stride,
            seed,
            out,
        } => {
            let cfg = harness::CoupleExperiment {
                traj,
                start_a,
                start_b,
                window: harness::parse_window(&window)?,
                runs,
                dt,
                conv: conv(&c)?,
                seed,
                theta,
                coalescence_edges,
                decay_points,
                record_stride,
            };
            (harness::run_couple(&cfg, &out)?, out)
        }
        Command::TvDecay { traj, start_a, start_b, u0, lengths, runs, dt, conv: c, seed, out } => {
            let cfg = harness::TvDecayExperiment { traj, start_a, start_b, u0, lengths, runs, dt, conv: conv(&c)?, seed };
            (harness::run_tv_decay(&cfg, &out)?, out)
        }
        Command::Pde { traj, init, eps, until, dt, conv: c, record_every, out } => {
            let cfg = harness::PdeExperiment { traj, init, eps, until, dt, conv: conv(&c)?, record_every };
            let dir = out.parent().map(PathBuf::from).unwrap_or_default();
            (harness::run_pde(&cfg, &out)?, dir)
        }
        Command::SphereCheck { subdiv, dt0, paths, dt, seed, out } => {
            let cfg = harness::SphereCheckExperiment { subdiv, dt0, paths, dt, seed };
            (harness::run_sphere_check(&cfg, &out)?, out)
        }
        Command::VerifyAll { quick, seed, out } => {
            let cfg = harness::VerifyExperiment { quick, seed };
            (harness::run_verify_all(&cfg, &out)?, out)
        }
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::BadParams(_)
        | Error::Parse { .. }
        | Error::OutOfRange { .. }
        | Error::DomainError(_)
        | Error::InsufficientPaths { .. }
        | Error::InsufficientRuns { .. } => 2,
        Error::Io(_) => 3,
        Error::InvariantFailure(_) => 1,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    match run(cli.command) {
        Ok((verdict, dir)) => {
            for c in &verdict.checks {
                println!("{} {} = {} ({} {})", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.relation, c.bound);
            }
            if verdict.passed() {
                ExitCode::SUCCESS
            } else {
                if let Err(e) = harness::write_failure_report(&dir, &verdict) {
                    eprintln!("error: {e}");
                }
                let e = Error::InvariantFailure(format!("{} check(s) failed", verdict.failures().len()));
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
