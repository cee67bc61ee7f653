//! Closed forms for the round sphere shrinking under mean curvature flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Round `n`-sphere of initial radius `r0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereOracle {
    pub r0: f64,
    pub n: usize,
}

impl SphereOracle {
    pub fn new(r0: f64, n: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) || n < 2 {
            return Err(Error::BadParams(format!("sphere oracle needs r0 > 0 and n >= 2 (got {r0}, {n})")));
        }
        Ok(Self { r0, n })
    }

    /// Explosion time `r0² / 2n`.
    pub fn explosion_time(&self) -> f64 {
        self.r0 * self.r0 / (2.0 * self.n as f64)
    }

    fn check(&self, t: f64) -> Result<()> {
        let tc = self.explosion_time();
        if !(0.0..tc).contains(&t) {
            return Err(Error::OutOfRange { t, lo: 0.0, hi: tc });
        }
        Ok(())
    }

    /// Radius `sqrt(r0² - 2nt)`.
    pub fn radius(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok((self.r0 * self.r0 - 2.0 * self.n as f64 * t).sqrt())
    }

    /// Position at time `t` of the point that started at `x`.
    pub fn position(&self, t: f64, x: &Vec3) -> Result<Vec3> {
        Ok(x * (self.radius(t)? / self.r0))
    }

    /// Ratio `Δ_{g(t)} / Δ_{g(0)}` of the homothetic metrics.
    pub fn laplacian_scale(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        let r2 = self.r0 * self.r0;
        Ok(r2 / (r2 - 2.0 * self.n as f64 * t))
    }

    /// Mean curvature `n / r(t)`.
    pub fn mean_curvature(&self, t: f64) -> Result<f64> {
        Ok(self.n as f64 / self.radius(t)?)
    }

    /// Time change `φ(s) = Tc e^{s / 2Tc}` for `s <= 0`: the backward process
    /// read at backward time `φ(s)` is a Brownian motion of the initial metric.
    pub fn phi(&self, s: f64) -> f64 {
        let tc = self.explosion_time();
        tc * (s / (2.0 * tc)).exp()
    }

    pub fn phi_inverse(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::DomainError(format!("phi inverse needs u > 0, got {u}")));
        }
        let tc = self.explosion_time();
        Ok(2.0 * tc * (u / tc).ln())
    }

    /// Surface measure of the unit `n`-sphere.
    pub fn unit_sphere_measure(&self) -> f64 {
        let n = self.n as f64;
        2.0 * std::f64::consts::PI.powf((n + 1.0) / 2.0) / gamma_half_integer(n + 1.0)
    }

    /// Uniform density `1 / (ω_n r^n)` at flow time `t`.
    pub fn uniform_density(&self, t: f64) -> Result<f64> {
        Ok(1.0 / (self.unit_sphere_measure() * self.radius(t)?.powi(self.n as i32)))
    }
}

/// Law of the angle travelled by Brownian motion with generator `κ Δ` on the
/// unit 2-sphere after time `s`: `P(θ <= x)` from the Legendre expansion of
/// the heat kernel, with `σ = κ s`.
pub fn angle_cdf_unit_two_sphere(sigma: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= std::f64::consts::PI {
        return 1.0;
    }
    let a = x.cos();
    // Terms decay like exp(-l² σ); stop once negligible.
    let l_max = ((40.0 / sigma.max(1e-12)).sqrt() as usize + 10).min(20_000);
    let (mut p_prev, mut p_cur) = (1.0, a); // P_0, P_1
    let mut sum = 1.0 - a;
    for l in 1..=l_max {
        let lf = l as f64;
        let p_next = ((2.0 * lf + 1.0) * a * p_cur - lf * p_prev) / (lf + 1.0);
        let w = (-lf * (lf + 1.0) * sigma).exp();
        sum += w * (p_prev - p_next);
        if w < 1e-17 {
            break;
        }
        p_prev = p_cur;
        p_cur = p_next;
    }
    (0.5 * sum).clamp(0.0, 1.0)
}

/// Density of the heat kernel `e^{σΔ}` on the unit 2-sphere at angle `θ`
/// from the source, per unit area.
pub fn heat_kernel_unit_two_sphere(sigma: f64, theta: f64) -> f64 {
    let a = theta.cos();
    let l_max = ((40.0 / sigma.max(1e-12)).sqrt() as usize + 10).min(20_000);
    let (mut p_prev, mut p_cur) = (1.0, a);
    let mut sum = 1.0 + 3.0 * (-2.0 * sigma).exp() * a;
    for l in 1..l_max {
        let lf = l as f64;
        let p_next = ((2.0 * lf + 1.0) * a * p_cur - lf * p_prev) / (lf + 1.0);
        let w = (-(lf + 1.0) * (lf + 2.0) * sigma).exp();
        sum += (2.0 * lf + 3.0) * w * p_next;
        if w < 1e-17 {
            break;
        }
        p_prev = p_cur;
        p_cur = p_next;
    }
    sum / (4.0 * std::f64::consts::PI)
}

/// `Γ(x / 2)` for a positive integer `x`.
fn gamma_half_integer(x: f64) -> f64 {
    let k = x.round() as u64;
    let mut g = if k % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut a = if k % 2 == 0 { 1.0 } else { 0.5 };
    while a < x / 2.0 - 1e-9 {
        g *= a;
        a += 1.0;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_two_sphere_values() {
        let o = SphereOracle::new(1.0, 2).unwrap();
        assert_eq!(o.explosion_time(), 0.25);
        assert!((o.radius(0.09).unwrap() - 0.8).abs() < 1e-15);
        assert!((o.laplacian_scale(0.1).unwrap() - 1.0 / 0.6).abs() < 1e-14);
        assert_eq!(o.phi(0.0), 0.25);
        assert!((o.unit_sphere_measure() - 4.0 * std::f64::consts::PI).abs() < 1e-13);
        assert!(o.radius(0.25).is_err());
        assert!(o.radius(-0.1).is_err());
    }

    #[test]
    fn measures_of_higher_spheres() {
        let pi = std::f64::consts::PI;
        assert!((SphereOracle::new(1.0, 3).unwrap().unit_sphere_measure() - 2.0 * pi * pi).abs() < 1e-12);
        assert!((SphereOracle::new(1.0, 4).unwrap().unit_sphere_measure() - 8.0 * pi * pi / 3.0).abs() < 1e-12);
    }

    #[test]
    fn angle_law_small_time_is_rayleigh() {
        // κ = 1, s small: θ is approximately Rayleigh with σ² = 2s.
        let s = 1e-3;
        for x in [0.02f64, 0.05, 0.1] {
            let rayleigh = 1.0 - (-x * x / (4.0 * s)).exp();
            assert!((angle_cdf_unit_two_sphere(s, x) - rayleigh).abs() < 5e-3);
        }
        assert_eq!(angle_cdf_unit_two_sphere(0.3, 0.0), 0.0);
        assert_eq!(angle_cdf_unit_two_sphere(0.3, std::f64::consts::PI), 1.0);
    }

    #[test]
    fn heat_kernel_integrates_to_one_and_matches_cdf() {
        let sigma = 0.2;
        let n = 4000;
        let h = std::f64::consts::PI / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            let th = (i as f64 + 0.5) * h;
            total += heat_kernel_unit_two_sphere(sigma, th) * 2.0 * std::f64::consts::PI * th.sin() * h;
            if i == n / 3 {
                let cdf = angle_cdf_unit_two_sphere(sigma, (i + 1) as f64 * h);
                assert!((total - cdf).abs() < 1e-5, "{total} {cdf}");
            }
        }
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phi_round_trip() {
        let o = SphereOracle::new(1.3, 3).unwrap();
        for s in [-3.0, -0.5, 0.0] {
            assert!((o.phi_inverse(o.phi(s)).unwrap() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn radius_solves_the_flow_ode() {
        // dr/dt = -n / r
        let o = SphereOracle::new(2.0, 2).unwrap();
        let h = 1e-6;
        for t in [0.1, 0.5, 0.9] {
            let d = (o.radius(t + h).unwrap() - o.radius(t - h).unwrap()) / (2.0 * h);
            assert!((d + o.mean_curvature(t).unwrap()).abs() < 1e-7);
        }
    }
}
