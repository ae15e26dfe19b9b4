//! ℛ_t = ∬ A_t(y₁,y₂) W(dy₁)W(dy₂) with the y-axis cut into cells.
//!
//! With X_m = Σ_i φ_{mi} ΔW_i, where φ_{mi} averages (s−y)_+^{H/2−1} over
//! s-cell m and y-cell i, the off-diagonal double sum with kernel
//! h Σ_m φ_{mi}φ_{mj} equals h Σ_m (X_m² − Σ_i φ_{mi}² ΔW_i²), so one path
//! costs two
//! convolutions instead of a quadratic form. Near [−T, T] the cells are
//! uniform and the convolutions run through an FFT; beyond −T the cells
//! grow geometrically out to the truncation point and their contribution,
//! smooth in s, is interpolated from Chebyshev nodes.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{check_paths, normalize_rows, path_rng, raw_variance, Method, PathEnsemble};
use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::special::{beta_fn, HurstParameter};

/// Neglected variance allowed, relative to the total.
const TAIL_BUDGET: f64 = 1e-3;
const CHEB_NODES: usize = 16;
const MAX_TRUNCATION_RATIO: f64 = 1e200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegralConfig {
    /// Number of uniform cells over [0, T]; the near field uses twice that.
    pub n_quad_nodes: usize,
    /// Left end −M of the y-axis. `None` picks M from the tail bound.
    pub truncation: Option<f64>,
    /// Growth factor of the far-field cells.
    pub far_ratio: f64,
}

impl Default for DoubleIntegralConfig {
    fn default() -> Self {
        Self { n_quad_nodes: 4096, truncation: None, far_ratio: 1.05 }
    }
}

/// Upper bound on the share of Var(ℛ_t) carried by y < −M.
///
/// With C(y) = ∫_0^t (s−y)_+^{H/2−1} ds the kernel obeys
/// A_t(y₁,y₂) ≤ |y₁|^{H/2−1} C(y₂) for y₁ < 0, and ∫ C² has a closed form.
pub fn tail_fraction(h: HurstParameter, t: f64, m: f64) -> f64 {
    let hv = h.value();
    let b = beta_fn(hv / 2.0, 1.0 - hv).expect("positive arguments");
    let c_sq = 2.0 * b * t.powf(hv + 1.0) / (hv * (hv + 1.0));
    4.0 * m.powf(hv - 1.0) * c_sq / ((1.0 - hv) * raw_variance(h, t))
}

/// Smallest truncation M for which the tail bound at time `t` is half the
/// budget.
pub fn truncation_for(h: HurstParameter, t: f64) -> Result<f64> {
    let hv = h.value();
    let at_t = tail_fraction(h, t, t);
    let m = t * (at_t / (0.5 * TAIL_BUDGET)).powf(1.0 / (1.0 - hv));
    if !m.is_finite() || m / t > MAX_TRUNCATION_RATIO {
        return Err(Error::config(format!(
            "H = {h} needs a y-axis truncation beyond {MAX_TRUNCATION_RATIO:e}·T to keep the \
             neglected variance under {TAIL_BUDGET:e}"
        )));
    }
    Ok(m.max(t))
}

pub fn simulate_double_integral(
    h: HurstParameter,
    grid: GridSpec,
    n_paths: usize,
    seed: u64,
    n_quad_nodes: usize,
) -> Result<PathEnsemble> {
    let cfg = DoubleIntegralConfig { n_quad_nodes, ..Default::default() };
    simulate_double_integral_with(h, grid, n_paths, seed, &cfg)
}

pub fn simulate_double_integral_with(
    h: HurstParameter,
    grid: GridSpec,
    n_paths: usize,
    seed: u64,
    cfg: &DoubleIntegralConfig,
) -> Result<PathEnsemble> {
    grid.validate()?;
    check_paths(n_paths)?;
    if cfg.n_quad_nodes < 64 {
        return Err(Error::config(format!(
            "n_quad_nodes must be at least 64, got {}",
            cfg.n_quad_nodes
        )));
    }
    if !(cfg.far_ratio > 1.0) || !cfg.far_ratio.is_finite() {
        return Err(Error::config(format!("far_ratio must exceed 1, got {}", cfg.far_ratio)));
    }
    let t_max = grid.t_max;
    let m = match cfg.truncation {
        Some(m) => {
            let frac = tail_fraction(h, t_max, m.max(t_max));
            if !(frac < TAIL_BUDGET) {
                return Err(Error::config(format!(
                    "truncation at -{m} leaves an estimated {frac:.3e} of the variance, above {TAIL_BUDGET:e}"
                )));
            }
            m.max(t_max)
        }
        None => truncation_for(h, t_max)?,
    };

    let sim = Simulator::new(h, &grid, cfg.n_quad_nodes, m, cfg.far_ratio);
    let rows: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map_init(|| sim.workspace(), |ws, p| sim.path(ws, &mut path_rng(seed, p)))
        .collect();
    let mut values: Vec<f64> = rows.into_iter().flatten().collect();
    let factor = normalize_rows(&mut values, &grid, h, |t| raw_variance(h, t))?;
    PathEnsemble::from_rows(grid, h, Method::DoubleIntegral, seed, factor, values)
}

/// Average of (s−y)_+^{a−1} over an s-cell and the y-cell `d` cells before
/// it: a second difference of x^{a+1}/(a(a+1)).
fn cell_kernel(a: f64, step: f64, d: usize) -> f64 {
    let d = d as f64;
    let g = |x: f64| if x > 0.0 { x.powf(a + 1.0) } else { 0.0 };
    step.powf(a - 1.0) * (g(d + 1.0) - 2.0 * g(d) + g(d - 1.0)) / (a * (a + 1.0))
}

struct Simulator {
    n: usize,
    step: f64,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Spectra of the cell kernel and its square, scaled for the inverse.
    kernel_hat: Vec<Complex64>,
    kernel_sq_hat: Vec<Complex64>,
    /// Far field: per Chebyshev node, coefficients of each far normal.
    far_coef: Vec<Vec<f64>>,
    far_coef_sq: Vec<Vec<f64>>,
    /// Barycentric interpolation rows from Chebyshev nodes to s-cell midpoints.
    interp: Vec<[f64; CHEB_NODES]>,
    /// Position of each grid node in units of the s-cell width.
    grid_pos: Vec<f64>,
}

struct Workspace {
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    far: Vec<f64>,
}

impl Simulator {
    fn new(h: HurstParameter, grid: &GridSpec, n: usize, m: f64, far_ratio: f64) -> Self {
        let a = h.value() / 2.0;
        let t_max = grid.t_max;
        let step = t_max / n as f64;

        let kernel: Vec<f64> = (0..2 * n).map(|d| cell_kernel(a, step, d)).collect();

        let fft_len = (3 * n).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let spectrum = |vals: &mut dyn Iterator<Item = f64>| {
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
            for (b, v) in buf.iter_mut().zip(vals) {
                b.re = v / fft_len as f64;
            }
            forward.process(&mut buf);
            buf
        };
        let kernel_hat = spectrum(&mut kernel.iter().copied());
        let kernel_sq_hat = spectrum(&mut kernel.iter().map(|k| k * k));

        let mut edges = vec![t_max];
        while *edges.last().unwrap() < m {
            let next = (edges.last().unwrap() * far_ratio).min(m);
            edges.push(next);
        }
        let cheb: Vec<f64> = (0..CHEB_NODES)
            .map(|c| {
                let theta = std::f64::consts::PI * (c as f64 + 0.5) / CHEB_NODES as f64;
                0.5 * t_max * (1.0 + theta.cos())
            })
            .collect();
        let far_coef: Vec<Vec<f64>> = cheb
            .iter()
            .map(|&s| {
                edges
                    .windows(2)
                    .map(|e| {
                        let width = e[1] - e[0];
                        ((s + e[1]).powf(a) - (s + e[0]).powf(a)) / (a * width.sqrt())
                    })
                    .collect()
            })
            .collect();
        let far_coef_sq = far_coef.iter().map(|r| r.iter().map(|c| c * c).collect()).collect();

        let bary: Vec<f64> = (0..CHEB_NODES)
            .map(|c| {
                let theta = std::f64::consts::PI * (2 * c + 1) as f64 / (2 * CHEB_NODES) as f64;
                if c % 2 == 0 { theta.sin() } else { -theta.sin() }
            })
            .collect();
        let interp = (0..n)
            .map(|i| {
                let s = (i as f64 + 0.5) * step;
                let mut row = [0.0; CHEB_NODES];
                if let Some(hit) = cheb.iter().position(|&x| x == s) {
                    row[hit] = 1.0;
                    return row;
                }
                for c in 0..CHEB_NODES {
                    row[c] = bary[c] / (s - cheb[c]);
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|r| *r /= total);
                row
            })
            .collect();

        let grid_pos = grid.nodes().iter().map(|t| t / step).collect();
        Self {
            n,
            step,
            fft_len,
            forward,
            inverse,
            kernel_hat,
            kernel_sq_hat,
            far_coef,
            far_coef_sq,
            interp,
            grid_pos,
        }
    }

    fn workspace(&self) -> Workspace {
        let scratch_len =
            self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        Workspace {
            buf: vec![Complex64::new(0.0, 0.0); self.fft_len],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            far: vec![0.0; self.far_coef[0].len()],
        }
    }

    fn path(&self, ws: &mut Workspace, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.n;
        let len = self.fft_len;

        // Pack ξ and ξ² into one complex signal, transform once, split the
        // spectra by conjugate symmetry and recombine so that the real and
        // imaginary parts of the inverse are the two convolutions.
        ws.buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for b in ws.buf.iter_mut().take(2 * n) {
            let xi: f64 = rng.sample(StandardNormal);
            *b = Complex64::new(xi, xi * xi);
        }
        ws.far.iter_mut().for_each(|f| *f = rng.sample(StandardNormal));
        self.forward.process_with_scratch(&mut ws.buf, &mut ws.scratch);
        let z = ws.buf.clone();
        for k in 0..len {
            let zc = z[(len - k) % len].conj();
            let lin = (z[k] + zc) * 0.5;
            let sq = (z[k] - zc) * Complex64::new(0.0, -0.5);
            ws.buf[k] = lin * self.kernel_hat[k] + Complex64::i() * sq * self.kernel_sq_hat[k];
        }
        self.inverse.process_with_scratch(&mut ws.buf, &mut ws.scratch);

        let mut far_x = [0.0; CHEB_NODES];
        let mut far_d = [0.0; CHEB_NODES];
        for c in 0..CHEB_NODES {
            let (mut x, mut d) = (0.0, 0.0);
            for ((coef, coef_sq), xi) in
                self.far_coef[c].iter().zip(&self.far_coef_sq[c]).zip(&ws.far)
            {
                x += coef * xi;
                d += coef_sq * xi * xi;
            }
            far_x[c] = x;
            far_d[c] = d;
        }

        let sqrt_step = self.step.sqrt();
        let mut cumulative = Vec::with_capacity(n + 1);
        let mut density = Vec::with_capacity(n);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for m in 0..n {
            let row = &self.interp[m];
            let fx: f64 = row.iter().zip(&far_x).map(|(w, v)| w * v).sum();
            let fd: f64 = row.iter().zip(&far_d).map(|(w, v)| w * v).sum();
            let x = sqrt_step * ws.buf[n + m].re + fx;
            let d = self.step * ws.buf[n + m].im + fd;
            let v = x * x - d;
            density.push(v);
            acc += self.step * v;
            cumulative.push(acc);
        }

        self.grid_pos
            .iter()
            .map(|&u| {
                let q = u.floor() as usize;
                if q >= n {
                    cumulative[n]
                } else {
                    cumulative[q] + (u - q as f64) * self.step * density[q]
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn auto_truncation_meets_budget() {
        for hv in [0.6, 0.75, 0.9] {
            let m = truncation_for(h(hv), 2.0).unwrap();
            assert!(tail_fraction(h(hv), 2.0, m) <= 0.5e-3 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn short_truncation_is_a_config_error() {
        let grid = GridSpec::uniform(1.0, 17).unwrap();
        let cfg = DoubleIntegralConfig { truncation: Some(10.0), ..Default::default() };
        let err = simulate_double_integral_with(h(0.75), grid, 4, 1, &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn too_few_cells_rejected() {
        let grid = GridSpec::uniform(1.0, 17).unwrap();
        assert!(matches!(
            simulate_double_integral(h(0.75), grid, 4, 1, 32),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn paths_start_at_zero_and_are_seed_deterministic() {
        let grid = GridSpec::uniform(1.0, 17).unwrap();
        let a = simulate_double_integral(h(0.7), grid, 40, 9, 128).unwrap();
        let b = simulate_double_integral(h(0.7), grid, 40, 9, 128).unwrap();
        assert_eq!(a, b);
        assert!((0..40).all(|i| a.path(i)[0] == 0.0));
        let c = simulate_double_integral(h(0.7), grid, 40, 10, 128).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn packed_convolutions_match_direct_sums() {
        let grid = GridSpec::uniform(1.0, 65).unwrap();
        let n = 64;
        let sim = Simulator::new(h(0.8), &grid, n, 4.0, 1.05);
        let mut ws = sim.workspace();
        let mut rng = path_rng(3, 0);
        let _ = sim.path(&mut ws, &mut rng);
        // Recreate the normals and compare one output index directly.
        let mut rng = path_rng(3, 0);
        let xi: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let kappa = |d: usize| cell_kernel(0.4, sim.step, d);
        let m = 10;
        let direct: f64 = (0..=n + m).map(|i| kappa(n + m - i) * xi[i]).sum();
        let direct_sq: f64 = (0..=n + m).map(|i| (kappa(n + m - i) * xi[i]).powi(2)).sum();
        assert!((ws.buf[n + m].re - direct).abs() < 1e-9 * direct.abs().max(1.0));
        assert!((ws.buf[n + m].im - direct_sq).abs() < 1e-9 * direct_sq.max(1.0));
    }
}
