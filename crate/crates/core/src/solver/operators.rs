//! Space-time convolution operators on a uniform grid.
//!
//! Heat weights are exact cell integrals of G (differences of erf), and the
//! Burgers kernel ∂_x G is integrated exactly over each space-time cell via
//! F(τ, z) = ∫_0^τ G_s(z) ds, so the (t−s)^{−1/2} singularity never meets a
//! quadrature node. Fields are extended past the domain by repeating their
//! edge values, which keeps constants exact.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use statrs::function::erf::{erf, erfc};

use super::config::{InitialCondition, SolverConfig};
use crate::error::Result;
use crate::heat_kernel::{spatial_half_width, time_integrated_g, Viscosity};

/// ∫ over the cell [(m−½)dx, (m+½)dx] of G_τ.
fn heat_cell_weight(m: i64, dx: f64, tau: f64, nu: f64) -> f64 {
    let c = 1.0 / (4.0 * nu * tau).sqrt();
    let lo = (m.unsigned_abs() as f64 - 0.5) * dx * c;
    let hi = (m.unsigned_abs() as f64 + 0.5) * dx * c;
    if m == 0 {
        erf(hi)
    } else {
        0.5 * (erfc(lo) - erfc(hi))
    }
}

/// Discrete (G_t ∗ u0)(x) on a spatial lattice of spacing `dx`; the
/// profile is sampled at x − m dx and weighted by exact cell masses.
pub fn linear_term(u0: &InitialCondition, t: f64, x: f64, nu: Viscosity, dx: f64) -> f64 {
    if t <= 0.0 {
        return u0.eval(x);
    }
    let reach = (spatial_half_width(nu, t) / dx).ceil() as i64 + 1;
    (-reach..=reach)
        .map(|m| heat_cell_weight(m, dx, t, nu.value()) * u0.eval(x - m as f64 * dx))
        .sum()
}

/// Precomputed kernels for one configuration.
pub struct Discretization {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
    pad: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectra by time lag (index 0 unused), already divided by the FFT length.
    heat_hat: Vec<Vec<Complex64>>,
    burgers_hat: Vec<Vec<Complex64>>,
    u_lin: Vec<f64>,
    u0_samples: Vec<f64>,
}

impl Discretization {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.time_grid.validate()?;
        let n_t = cfg.time_grid.n_points;
        let t_max = cfg.time_grid.t_max;
        let dt = t_max / (n_t - 1) as f64;
        let n_x = cfg.space.n_x;
        let dx = cfg.space.dx();
        let nu = cfg.nu.value();
        let pad = (spatial_half_width(cfg.nu, t_max) / dx).ceil() as usize + 1;
        let fft_len = (n_x + 2 * pad).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);

        let spectrum = |w: &dyn Fn(i64) -> f64| {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for m in -(pad as i64)..=pad as i64 {
                let idx = m.rem_euclid(fft_len as i64) as usize;
                buf[idx].re = w(m) / fft_len as f64;
            }
            forward.process(&mut buf);
            buf
        };
        let mut heat_hat = vec![Vec::new()];
        let mut burgers_hat = vec![Vec::new()];
        for lag in 1..n_t {
            let tau1 = lag as f64 * dt;
            let tau0 = (lag - 1) as f64 * dt;
            heat_hat.push(spectrum(&|m| heat_cell_weight(m, dx, tau1, nu)));
            burgers_hat.push(spectrum(&|m| {
                let zp = (m as f64 + 0.5) * dx;
                let zm = (m as f64 - 0.5) * dx;
                let f = |z: f64| time_integrated_g(tau1, z, nu) - time_integrated_g(tau0, z, nu);
                0.5 * (f(zp) - f(zm))
            }));
        }

        let xs = cfg.space.xs();
        let u0_samples: Vec<f64> = xs.iter().map(|&x| cfg.u0.eval(x)).collect();
        // u0 is known off the grid, so the linear term samples it directly on
        // the padded lattice instead of repeating edge values
        let mut u0_hat = vec![Complex64::new(0.0, 0.0); fft_len];
        for (q, b) in u0_hat.iter_mut().take(n_x + 2 * pad).enumerate() {
            b.re = cfg.u0.eval(cfg.space.x(0) + (q as f64 - pad as f64) * dx);
        }
        forward.process(&mut u0_hat);
        let mut u_lin = Vec::with_capacity(n_t * n_x);
        u_lin.extend_from_slice(&u0_samples);
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        for kernel in heat_hat.iter().skip(1) {
            for ((b, k), u) in buf.iter_mut().zip(kernel).zip(&u0_hat) {
                *b = k * u;
            }
            inverse.process(&mut buf);
            u_lin.extend(buf[pad..pad + n_x].iter().map(|c| c.re));
        }

        Ok(Self {
            n_t,
            n_x,
            dt,
            dx,
            pad,
            fft_len,
            forward,
            inverse,
            heat_hat,
            burgers_hat,
            u_lin,
            u0_samples,
        })
    }

    /// u_lin on the grid, time-major (n_t × n_x).
    pub fn u_lin(&self) -> &[f64] {
        &self.u_lin
    }

    pub fn u0_samples(&self) -> &[f64] {
        &self.u0_samples
    }

    fn extended_spectrum(&self, row: impl Fn(usize) -> f64) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let last = self.n_x - 1;
        for (q, b) in buf.iter_mut().take(self.n_x + 2 * self.pad).enumerate() {
            let j = q.saturating_sub(self.pad).min(last);
            b.re = row(j);
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Σ over sources of Σ_{k<i} K[i−k] ∗ signal_k at every time index i,
    /// returned time-major with a zero first row.
    fn accumulate(&self, sources: &[(&[Vec<Complex64>], &[Vec<Complex64>])]) -> Vec<f64> {
        let (n_t, n_x, len) = (self.n_t, self.n_x, self.fft_len);
        let mut out = vec![0.0; n_t * n_x];
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for i in 1..n_t {
            acc.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
            for (kernels, signals) in sources {
                for (k, sig) in signals.iter().enumerate().take(i) {
                    let ker = &kernels[i - k];
                    for ((a, kk), s) in acc.iter_mut().zip(ker).zip(sig) {
                        *a += kk * s;
                    }
                }
            }
            self.inverse.process(&mut acc);
            for j in 0..n_x {
                out[i * n_x + j] = acc[j + self.pad].re;
            }
        }
        out
    }

    fn burgers_signals(&self, u: &[f64]) -> Vec<Vec<Complex64>> {
        let n_x = self.n_x;
        (0..self.n_t - 1)
            .map(|k| {
                self.extended_spectrum(|j| {
                    let a = u[k * n_x + j];
                    let b = u[(k + 1) * n_x + j];
                    0.5 * (a * a + b * b)
                })
            })
            .collect()
    }

    fn noise_signals(&self, u: &[f64], sigma: &impl Fn(f64) -> f64, increments: &[f64]) -> Vec<Vec<Complex64>> {
        let n_x = self.n_x;
        (0..self.n_t - 1)
            .map(|k| self.extended_spectrum(|j| sigma(u[k * n_x + j]) * increments[k]))
            .collect()
    }

    /// 𝒩(u) = ½ ∫_0^t ∫ ∂_x G_{t−s}(x−y) u(s,y)² dy ds, with u² taken as the
    /// average of its end values on each time step.
    pub fn nonlinear_term(&self, u: &[f64]) -> Vec<f64> {
        let sig = self.burgers_signals(u);
        self.accumulate(&[(&self.burgers_hat, &sig)])
    }

    /// Left-point sum Σ_k Φ(s_k) (ℛ_{s_{k+1}} − ℛ_{s_k}) with
    /// Φ(s) = ∫ G_{t−s}(x−y) σ(u(s,y)) dy.
    pub fn stochastic_convolution(&self, u: &[f64], sigma: impl Fn(f64) -> f64, increments: &[f64]) -> Vec<f64> {
        let sig = self.noise_signals(u, &sigma, increments);
        self.accumulate(&[(&self.heat_hat, &sig)])
    }

    /// One application of the solution map u ↦ u_lin + 𝒩(u) + 𝒮(u).
    pub fn apply(
        &self,
        u: &[f64],
        nonlinear: bool,
        sigma: Option<&dyn Fn(f64) -> f64>,
        increments: Option<&[f64]>,
    ) -> Vec<f64> {
        let burgers = if nonlinear { self.burgers_signals(u) } else { Vec::new() };
        let noise = match (sigma, increments) {
            (Some(s), Some(inc)) => self.noise_signals(u, &s, inc),
            _ => Vec::new(),
        };
        let mut sources: Vec<(&[Vec<Complex64>], &[Vec<Complex64>])> = Vec::new();
        if !burgers.is_empty() {
            sources.push((&self.burgers_hat, &burgers));
        }
        if !noise.is_empty() {
            sources.push((&self.heat_hat, &noise));
        }
        let mut out = self.accumulate(&sources);
        out[..self.n_x].copy_from_slice(&self.u0_samples);
        for (o, l) in out.iter_mut().zip(&self.u_lin).skip(self.n_x) {
            *o += l;
        }
        out
    }
}
