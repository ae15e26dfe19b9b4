//! The heat kernel G_t(x) = (4 pi nu t)^{-1/2} exp(-x^2 / (4 nu t)) and the
//! estimates used throughout the mild formulation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Viscosity(f64);

impl Viscosity {
    pub fn new(nu: f64) -> Result<Self> {
        if nu > 0.0 && nu.is_finite() {
            Ok(Self(nu))
        } else {
            Err(Error::domain(format!("viscosity must be positive, got {nu}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Viscosity {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Viscosity> for f64 {
    fn from(v: Viscosity) -> f64 {
        v.0
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("heat kernel needs t > 0, got {t}")))
    }
}

/// G_t(x) without argument checks; callers guarantee t > 0.
#[inline]
pub fn g_raw(t: f64, x: f64, nu: f64) -> f64 {
    let v = 4.0 * nu * t;
    (-x * x / v).exp() / (PI * v).sqrt()
}

pub fn g(t: f64, x: f64, nu: Viscosity) -> Result<f64> {
    check_time(t)?;
    Ok(g_raw(t, x, nu.0))
}

/// Spatial derivative -x/(2 nu t) G_t(x).
pub fn g_dx(t: f64, x: f64, nu: Viscosity) -> Result<f64> {
    check_time(t)?;
    Ok(-x / (2.0 * nu.0 * t) * g_raw(t, x, nu.0))
}

/// Closed-form L^p(R) norm of G_t; `p = f64::INFINITY` gives the peak value.
pub fn g_lp_norm(t: f64, p: f64, nu: Viscosity) -> Result<f64> {
    check_time(t)?;
    if !(p >= 1.0) {
        return Err(Error::domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    let v = 4.0 * PI * nu.0 * t;
    if p.is_infinite() {
        return Ok(v.powf(-0.5));
    }
    // (int G^p)^{1/p} = v^{-1/2} (v/p)^{1/(2p)}
    Ok(v.powf(-0.5) * (v / p).powf(0.5 / p))
}

/// G_t(x) - G_s(x) for 0 < s < t.
pub fn g_time_diff(s: f64, t: f64, x: f64, nu: Viscosity) -> Result<f64> {
    if !(s > 0.0) || !(s < t) {
        return Err(Error::domain(format!("time difference needs 0 < s < t, got s={s}, t={t}")));
    }
    Ok(g_raw(t, x, nu.0) - g_raw(s, x, nu.0))
}

/// |G_t(x) - G_s(x)| / ((t-s) s^{-3/2} G_{2s}(x)).
pub fn time_diff_bound_ratio(s: f64, t: f64, x: f64, nu: Viscosity) -> Result<f64> {
    let d = g_time_diff(s, t, x, nu)?;
    Ok(d.abs() / ((t - s) * s.powf(-1.5) * g_raw(2.0 * s, x, nu.0)))
}

/// Largest time-difference bound ratio over a grid with s < t <= 2s.
///
/// For t > 2s the ratio is unbounded in x (G_t has the wider tail), so the
/// scan stays inside the region where a finite constant exists.
pub fn time_diff_bound_constant(nu: Viscosity) -> f64 {
    let mut best: f64 = 0.0;
    for si in 0..12 {
        let s = 0.01 * 2f64.powi(si) / 8.0;
        for k in 1..=16 {
            let t = s * (1.0 + k as f64 / 16.0);
            let w = (2.0 * nu.0 * t).sqrt();
            for xi in 0..=200 {
                let x = w * (xi as f64) * 0.06;
                if let Ok(r) = time_diff_bound_ratio(s, t, x, nu) {
                    best = best.max(r);
                }
            }
        }
    }
    best
}

/// sup_x |d/dx G_t(x)| / (t^{-1/2} G_{2t}(x)), scanned on a dense x grid.
/// The exact value is sqrt(2/nu) e^{-1/2}, independent of t.
pub fn gradient_bound_constant(t: f64, nu: Viscosity) -> Result<f64> {
    check_time(t)?;
    let w = (nu.0 * t).sqrt();
    let mut best: f64 = 0.0;
    for i in 1..=20_000 {
        let x = w * i as f64 * 1e-3;
        let r = (g_dx(t, x, nu)?).abs() / (t.powf(-0.5) * g_raw(2.0 * t, x, nu.0));
        best = best.max(r);
    }
    Ok(best)
}

/// ∫ G_a(x - y) G_b(x' - y) dy = G_{a+b}(x - x').
#[inline]
pub fn semigroup_product(a: f64, b: f64, dx: f64, nu: f64) -> f64 {
    g_raw(a + b, dx, nu)
}

/// F(tau, z) = ∫_0^tau G_s(z) ds in closed form.
pub fn time_integrated_g(tau: f64, z: f64, nu: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let az = z.abs();
    (tau / (PI * nu)).sqrt() * (-z * z / (4.0 * nu * tau)).exp()
        - az / (2.0 * nu) * erfc(az / (2.0 * (nu * tau).sqrt()))
}

/// Half-width of the truncated spatial domain needed up to time `t_max`.
pub fn spatial_half_width(nu: Viscosity, t_max: f64) -> f64 {
    12.0 * (2.0 * nu.0 * t_max).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_1d, QuadTolerance};
    use approx::assert_relative_eq;

    fn nu(v: f64) -> Viscosity {
        Viscosity::new(v).unwrap()
    }

    #[test]
    fn peak_mass_symmetry() {
        let n = nu(1.3);
        assert_relative_eq!(g(0.37, 0.0, n).unwrap(), (4.0 * PI * 1.3 * 0.37f64).powf(-0.5), max_relative = 1e-15);
        let tol = QuadTolerance::default();
        let mass = integrate_1d(|x| g_raw(0.37, x, 1.3), -30.0, 30.0, tol).unwrap().value;
        assert_relative_eq!(mass, 1.0, max_relative = 1e-10);
        assert_eq!(g(0.5, 0.7, n).unwrap(), g(0.5, -0.7, n).unwrap());
        assert!(g(0.0, 1.0, n).is_err());
        assert!(Viscosity::new(0.0).is_err());
    }

    #[test]
    fn derivative_sign_and_zero() {
        let n = nu(1.0);
        assert_eq!(g_dx(1.0, 0.0, n).unwrap(), 0.0);
        assert!(g_dx(1.0, 0.3, n).unwrap() < 0.0);
        let tol = QuadTolerance::default();
        let total = integrate_1d(|y| g_dx(0.8, y, n).unwrap(), -40.0, 40.0, tol).unwrap().value;
        assert!(total.abs() < 1e-10);
    }

    #[test]
    fn gradient_constant_is_t_independent() {
        let n = nu(1.0);
        let exact = (2.0f64).sqrt() * (-0.5f64).exp();
        for &t in &[0.1, 1.0, 10.0] {
            assert_relative_eq!(gradient_bound_constant(t, n).unwrap(), exact, max_relative = 1e-6);
        }
    }

    #[test]
    fn lp_norms() {
        let n = nu(1.0);
        assert_relative_eq!(g_lp_norm(2.5, 1.0, n).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(g_lp_norm(2.5, f64::INFINITY, n).unwrap(), (10.0 * PI).powf(-0.5), max_relative = 1e-14);
        let tol = QuadTolerance::default();
        let l2 = integrate_1d(|x| g_raw(1.0, x, 1.0).powi(2), -40.0, 40.0, tol).unwrap().value.sqrt();
        assert_relative_eq!(g_lp_norm(1.0, 2.0, n).unwrap(), l2, max_relative = 1e-10);
        assert_relative_eq!(l2, (8.0 * PI).powf(-0.25), max_relative = 1e-10);
        assert!(g_lp_norm(1.0, 0.5, n).is_err());
    }

    #[test]
    fn time_difference() {
        let n = nu(1.0);
        let d = g_time_diff(0.5, 0.7, 0.0, n).unwrap();
        assert_relative_eq!(d, (4.0 * PI).powf(-0.5) * (0.7f64.powf(-0.5) - 0.5f64.powf(-0.5)), max_relative = 1e-14);
        assert!(d < 0.0);
        assert!(g_time_diff(0.5, 0.5, 0.0, n).is_err());
        assert!(g_time_diff(0.5, 0.5 + 1e-12, 0.3, n).unwrap().abs() < 1e-10);
        let c = time_diff_bound_constant(n);
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn semigroup_identity() {
        let tol = QuadTolerance::new(1e-12, 1e-15, 2000).unwrap();
        let (a, b, x, xp) = (0.3, 0.45, 0.2, -0.1);
        let lhs = integrate_1d(|y| g_raw(a, x - y, 1.0) * g_raw(b, xp - y, 1.0), -40.0, 40.0, tol).unwrap().value;
        assert!((lhs - semigroup_product(a, b, x - xp, 1.0)).abs() < 1e-9);
    }

    #[test]
    fn time_integrated_closed_form() {
        let tol = QuadTolerance::new(1e-11, 1e-15, 2000).unwrap();
        for &(tau, z) in &[(0.3, 0.0), (0.3, 0.2), (2.0, -1.5)] {
            let num = integrate_1d(|s| g_raw(s, z, 0.7), 0.0, tau, tol).unwrap().value;
            assert_relative_eq!(time_integrated_g(tau, z, 0.7), num, max_relative = 1e-9);
        }
    }

    #[test]
    fn scaling() {
        for &(t, x) in &[(0.3, 0.4), (5.0, -2.0)] {
            let lhs = g_raw(t, x, 1.0);
            let rhs = t.powf(-0.5) * g_raw(1.0, x / t.sqrt(), 1.0);
            assert_relative_eq!(lhs, rhs, max_relative = 1e-14);
        }
    }
}
