//! Small statistics toolkit for the Monte Carlo checks: Kolmogorov–Smirnov
//! tests, least-squares lines, total variation, and coarse surface cells.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::mesh::{Embedding, SurfacePoint, Topology, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        s += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample test of `samples` against a continuous `cdf`.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, v) in x.iter().enumerate() {
        let f = cdf(*v);
        d = d.max(((i + 1) as f64 / n - f).abs()).max((f - i as f64 / n).abs());
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n), n: x.len() }
}

/// Two-sample test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    KsResult { statistic: d, p_value: ks_p_value(d, na * nb / (na + nb)), n: a.len().min(b.len()) }
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// z-score of the sample mean against zero.
pub fn z_score(x: &[f64]) -> f64 {
    let se = (variance(x) / x.len() as f64).sqrt();
    if se == 0.0 {
        return if mean(x) == 0.0 { 0.0 } else { f64::INFINITY };
    }
    mean(x) / se
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LineFit { slope, intercept, r2 }
}

/// Half the L¹ distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Normalized histogram of labels in `0..k`.
pub fn histogram(labels: &[usize], k: usize) -> Vec<f64> {
    let mut h = vec![0.0; k];
    for &l in labels {
        h[l] += 1.0;
    }
    let n = labels.len().max(1) as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Vertex nearest to a surface point (largest barycentric weight).
pub fn nearest_vertex(topology: &Topology, p: &SurfacePoint) -> usize {
    let tri = topology.triangle(p.triangle);
    let mut best = 0;
    for i in 1..3 {
        if p.bary[i] > p.bary[best] {
            best = i;
        }
    }
    tri[best]
}

/// Partition of the vertices into `k` cells around farthest-point seeds.
///
/// Monte Carlo histograms are compared on cells rather than single vertices
/// because the sampling noise of a per-vertex total variation scales like
/// `sqrt(V / N)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellPartition {
    pub seeds: Vec<usize>,
    pub cell_of_vertex: Vec<usize>,
}

impl CellPartition {
    pub fn farthest_point<E: Embedding + ?Sized>(mesh: &E, k: usize) -> Self {
        let n = mesh.topology().n_vertices();
        let k = k.clamp(1, n);
        let pos: Vec<Vec3> = (0..n).map(|v| mesh.position(v)).collect();
        let mut seeds = vec![0usize];
        let mut dist: Vec<f64> = pos.iter().map(|p| (p - pos[0]).norm()).collect();
        let mut cell = vec![0usize; n];
        while seeds.len() < k {
            let (far, _) = dist.iter().enumerate().fold((0, -1.0), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
            let c = seeds.len();
            seeds.push(far);
            for v in 0..n {
                let d = (pos[v] - pos[far]).norm();
                if d < dist[v] {
                    dist[v] = d;
                    cell[v] = c;
                }
            }
        }
        Self { seeds, cell_of_vertex: cell }
    }

    pub fn n_cells(&self) -> usize {
        self.seeds.len()
    }

    pub fn cell_of_point(&self, topology: &Topology, p: &SurfacePoint) -> usize {
        self.cell_of_vertex[nearest_vertex(topology, p)]
    }

    /// Sums per-vertex masses into cells.
    pub fn aggregate(&self, vertex_mass: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_cells()];
        for (v, m) in vertex_mass.iter().enumerate() {
            out[self.cell_of_vertex[v]] += m;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::builtin::icosphere;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn kolmogorov_quantiles() {
        // Classic critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn ks_accepts_true_law_and_rejects_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_one_sample(&x, normal_cdf).p_value > 0.01);
        assert!(ks_one_sample(&x, |v| normal_cdf(v - 0.2)).p_value < 1e-6);
        let y: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert!(ks_two_sample(&x, &y).p_value > 0.01);
        let z: Vec<f64> = y.iter().map(|v| v * 1.3).collect();
        assert!(ks_two_sample(&x, &z).p_value < 1e-4);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = linear_fit(&x, &y);
        assert!((f.slope - 2.5).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn total_variation_bounds() {
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(total_variation(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn farthest_point_cells_cover_the_sphere() {
        let m = icosphere(3, 1.0).unwrap();
        let cells = CellPartition::farthest_point(&m, 24);
        assert_eq!(cells.n_cells(), 24);
        let areas = cells.aggregate(&m.vertex_data().area);
        let total: f64 = areas.iter().sum();
        assert!((total - m.total_area()).abs() < 1e-12);
        // Roughly balanced: no cell holds more than 3x its share.
        assert!(areas.iter().all(|a| *a > 0.0 && *a < 3.0 * total / 24.0));
    }
}
