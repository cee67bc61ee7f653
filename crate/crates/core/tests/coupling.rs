use shrinkflow::brownian::{gtbm_step_on, path_noise, GeneratorConvention, Walker};
use shrinkflow::coupling::{coupled_step, coupling_batch, injectivity_proxy, CouplingConfig, Regime};
use shrinkflow::flow::{run_flow, FlowConfig};
use shrinkflow::geodesic::{minimal_geodesic, walk_straight, GeodesicOptions};
use shrinkflow::mesh::builtin::icosphere;
use shrinkflow::mesh::{triangle_frame, SurfacePoint, TriangulatedHypersurface};
use shrinkflow::stats;

/// Two walkers about 0.4 apart on the unit sphere.
fn pair(mesh: &TriangulatedHypersurface) -> (Walker, Walker) {
    let x = SurfacePoint::centroid(0);
    let [e1, _] = triangle_frame(mesh, 0);
    let y = walk_straight(mesh, &x, &e1, 0.4, &mut []).unwrap().end;
    (Walker::new(mesh, x), Walker::new(mesh, y))
}

fn distance_increments(conv: GeneratorConvention, mirror: bool) -> (f64, f64) {
    let mesh = icosphere(4, 1.0).unwrap();
    let (a, b) = pair(&mesh);
    let d0 = minimal_geodesic(&mesh, &a.point, &b.point).unwrap().length;
    let dt = 1e-5;
    let n = 6000u64;
    let inc: Vec<f64> = (0..n)
        .map(|i| {
            let (mut z1, mut z3) = (a, b);
            if mirror {
                let mut noise = path_noise(17, i);
                coupled_step(&mesh, 1.0, &mut z1, &mut z3, dt, conv, &mut noise, &GeodesicOptions::default()).unwrap();
            } else {
                gtbm_step_on(&mesh, 1.0, &mut z1, dt, conv, &mut path_noise(17, i)).unwrap();
                gtbm_step_on(&mesh, 1.0, &mut z3, dt, conv, &mut path_noise(18, i)).unwrap();
            }
            minimal_geodesic(&mesh, &z1.point, &z3.point).unwrap().length - d0
        })
        .collect();
    (stats::variance(&inc), dt)
}

#[test]
fn mirror_distance_increments_have_four_times_single_variance() {
    for conv in [GeneratorConvention::HALF, GeneratorConvention::ONE] {
        let (var, dt) = distance_increments(conv, true);
        let expected = 8.0 * conv.c * dt;
        assert!((var / expected - 1.0).abs() < 0.1, "c = {}: variance {var:e} vs {expected:e}", conv.c);
    }
}

#[test]
fn independent_distance_increments_add_two_variances() {
    let conv = GeneratorConvention::ONE;
    let (var, dt) = distance_increments(conv, false);
    let expected = 4.0 * conv.c * dt;
    assert!((var / expected - 1.0).abs() < 0.1, "variance {var:e} vs {expected:e}");
}

#[test]
fn coupling_batches_are_reproducible_and_consistent() {
    let traj = run_flow(&icosphere(3, 1.0).unwrap(), &FlowConfig::new(2e-4, 0.05)).unwrap();
    let tc = traj.explosion_time();
    let inj = injectivity_proxy(traj.initial()).unwrap();
    let cfg = CouplingConfig::from_proxy(inj, 2e-4, GeneratorConvention::ONE);
    let a = SurfacePoint::at_vertex(traj.topology(), 0);
    let b = SurfacePoint::centroid(3);
    let window = (0.1 * tc, 0.5 * tc);
    let first = coupling_batch(&traj, &cfg, a, b, window, 12, 4).unwrap();
    let second = coupling_batch(&traj, &cfg, a, b, window, 12, 4).unwrap();
    assert_eq!(
        first.iter().map(|r| (r.coupling_time, r.z1, r.z3)).collect::<Vec<_>>(),
        second.iter().map(|r| (r.coupling_time, r.z1, r.z3)).collect::<Vec<_>>()
    );
    for run in &first {
        assert!(run.longest_mirror_phase <= cfg.phase_cap + 1e-12);
        let last = run.timeline.last().unwrap();
        match run.coupling_time {
            Some(t) => {
                assert!(t >= window.0 && t <= window.1);
                assert_eq!(last.regime, Regime::Coalesced);
                assert_eq!(run.z1, run.z3);
            }
            None => assert_ne!(last.regime, Regime::Coalesced),
        }
    }
}

#[test]
fn config_rejects_inverted_thresholds() {
    let mut cfg = CouplingConfig::from_proxy(1.0, 1e-4, GeneratorConvention::HALF);
    assert!(cfg.validate().is_ok());
    cfg.theta_far = 0.5 * cfg.theta;
    assert!(cfg.validate().is_err());
}
