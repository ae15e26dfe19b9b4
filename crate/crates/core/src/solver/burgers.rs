//! Independent reference for σ ≡ 0: method of lines for
//! u_t = ν u_xx + ½ (u²)_x with central differences and classical RK4,
//! boundary values held at their initial values.

use super::config::{InitialCondition, SpaceGrid};
use crate::error::{Error, Result};
use crate::heat_kernel::Viscosity;

pub fn burgers_finite_difference(
    u0: &InitialCondition,
    nu: Viscosity,
    space: SpaceGrid,
    t_end: f64,
) -> Result<Vec<f64>> {
    if !(t_end >= 0.0) {
        return Err(Error::domain(format!("t_end must be non-negative, got {t_end}")));
    }
    let nu = nu.value();
    let dx = space.dx();
    let n = space.n_x;
    let mut u: Vec<f64> = space.xs().iter().map(|&x| u0.eval(x)).collect();
    if t_end == 0.0 {
        return Ok(u);
    }
    let umax = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let dt_max = (0.25 * dx * dx / nu).min(0.5 * dx / umax);
    let steps = (t_end / dt_max).ceil() as usize;
    let dt = t_end / steps as f64;

    let rhs = |u: &[f64], out: &mut [f64]| {
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for j in 1..n - 1 {
            let diff = nu * (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dx * dx);
            let adv = (u[j + 1] * u[j + 1] - u[j - 1] * u[j - 1]) / (4.0 * dx);
            out[j] = diff + adv;
        }
    };
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        rhs(&u, &mut k1);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k1[j];
        }
        rhs(&tmp, &mut k2);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k2[j];
        }
        rhs(&tmp, &mut k3);
        for j in 0..n {
            tmp[j] = u[j] + dt * k3[j];
        }
        rhs(&tmp, &mut k4);
        for j in 0..n {
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { iterate: 0 });
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_diffusion_of_gaussian() {
        // a tiny bump is essentially linear: compare with the heat solution
        let u0 = InitialCondition::GaussianBump { amplitude: 1e-6, center: 0.0, width: 1.0 };
        let nu = Viscosity::new(0.5).unwrap();
        let space = SpaceGrid::new(10.0, 401).unwrap();
        let u = burgers_finite_difference(&u0, nu, space, 0.5).unwrap();
        let s2: f64 = 1.0 + 2.0 * 0.5 * 0.5;
        let j = space.nearest(0.0);
        assert!((u[j] / 1e-6 - (1.0 / s2).sqrt()).abs() < 1e-3);
    }
}
