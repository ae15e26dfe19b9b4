//! Non-central limit approximation: normalized partial sums of X_k² − 1
//! for fractional Gaussian noise X with Hurst index (1+H)/2, whose
//! correlations decay like k^{H−1}. The noise is drawn exactly by
//! circulant embedding.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{check_paths, normalize_rows, path_rng, Method, PathEnsemble};
use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::special::HurstParameter;

/// Largest circulant length accepted (16 bytes per entry per worker).
pub const HERMITE_MAX_FFT_LEN: usize = 1 << 26;
const MIN_INNER: usize = 10_000;

fn fgn_autocov(h0: f64, k: usize) -> f64 {
    let k = k as f64;
    let p = 2.0 * h0;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

pub fn simulate_hermite_rank2(
    h: HurstParameter,
    grid: GridSpec,
    n_paths: usize,
    seed: u64,
    n_inner: usize,
) -> Result<PathEnsemble> {
    grid.validate()?;
    check_paths(n_paths)?;
    if n_inner < MIN_INNER {
        return Err(Error::config(format!(
            "n_inner must be at least {MIN_INNER} summands per unit time, got {n_inner}"
        )));
    }
    let t_max = grid.t_max;
    let n_steps = (n_inner as f64 * t_max).ceil() as usize;
    let fft_len = (2 * n_steps).next_power_of_two();
    if fft_len > HERMITE_MAX_FFT_LEN {
        return Err(Error::config(format!(
            "{n_steps} inner steps need a circulant of length {fft_len}, over the memory budget of \
             {HERMITE_MAX_FFT_LEN}"
        )));
    }
    let half = fft_len / 2;
    let h0 = 0.5 * (1.0 + h.value());

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(fft_len);
    let rho: Vec<f64> = (0..=half).map(|k| fgn_autocov(h0, k)).collect();
    let mut circ: Vec<Complex64> = (0..fft_len)
        .map(|j| Complex64::new(rho[if j <= half { j } else { fft_len - j }], 0.0))
        .collect();
    fft.process(&mut circ);
    let peak = circ.iter().map(|c| c.re).fold(0.0, f64::max);
    if let Some(bad) = circ.iter().find(|c| c.re < -1e-8 * peak) {
        return Err(Error::Accuracy {
            what: "circulant embedding has a negative eigenvalue".into(),
            best: bad.re,
            error: 0.0,
        });
    }
    let amplitude: Vec<f64> =
        circ.iter().map(|c| (c.re.max(0.0) / fft_len as f64).sqrt()).collect();

    let scale = (n_steps as f64).powf(-h.value());
    let grid_pos: Vec<f64> = grid.nodes().iter().map(|t| t / t_max * n_steps as f64).collect();
    let scratch_len = fft.get_inplace_scratch_len();

    let to_grid = |partial: &[f64]| -> Vec<f64> {
        grid_pos
            .iter()
            .map(|&u| {
                let q = u.floor() as usize;
                let v = if q >= n_steps {
                    partial[n_steps]
                } else {
                    partial[q] + (u - q as f64) * (partial[q + 1] - partial[q])
                };
                v * scale
            })
            .collect()
    };

    // the real and imaginary parts of one transform are independent noise
    // sequences, so stream q yields paths 2q and 2q + 1
    let n_pairs = n_paths.div_ceil(2) as u64;
    let rows: Vec<[Vec<f64>; 2]> = (0..n_pairs)
        .into_par_iter()
        .map_init(
            || {
                (
                    vec![Complex64::new(0.0, 0.0); fft_len],
                    vec![Complex64::new(0.0, 0.0); scratch_len],
                )
            },
            |(buf, scratch), q| {
                let mut rng = path_rng(seed, q);
                for (b, a) in buf.iter_mut().zip(&amplitude) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *b = Complex64::new(a * re, a * im);
                }
                fft.process_with_scratch(buf, scratch);
                let mut partial = [Vec::with_capacity(n_steps + 1), Vec::with_capacity(n_steps + 1)];
                let mut acc = [0.0, 0.0];
                partial[0].push(0.0);
                partial[1].push(0.0);
                for b in buf.iter().take(n_steps) {
                    acc[0] += b.re * b.re - 1.0;
                    acc[1] += b.im * b.im - 1.0;
                    partial[0].push(acc[0]);
                    partial[1].push(acc[1]);
                }
                [to_grid(&partial[0]), to_grid(&partial[1])]
            },
        )
        .collect();

    let mut values: Vec<f64> = rows.into_iter().flatten().take(n_paths).flatten().collect();
    let raw = |t: f64| {
        let n = ((t / t_max) * n_steps as f64).round() as usize;
        partial_sum_variance(h0, n) * scale * scale
    };
    let factor = normalize_rows(&mut values, &grid, h, raw)?;
    PathEnsemble::from_rows(grid, h, Method::HermiteRank2, seed, factor, values)
}

/// Var Σ_{k<n} (X_k² − 1) = 2 Σ_{|d|<n} (n − |d|) ρ(d)².
fn partial_sum_variance(h0: f64, n: usize) -> f64 {
    let mut total = n as f64;
    for d in 1..n {
        total += 2.0 * (n - d) as f64 * fgn_autocov(h0, d).powi(2);
    }
    2.0 * total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocovariance_is_unit_at_zero_and_decays_with_long_memory() {
        let h0 = 0.875;
        assert_eq!(fgn_autocov(h0, 0), 1.0);
        let r = fgn_autocov(h0, 1000) / fgn_autocov(h0, 2000);
        assert!((r - 2f64.powf(2.0 - 2.0 * h0)).abs() < 1e-3);
    }

    #[test]
    fn rejects_small_inner_count_and_huge_budget() {
        let h = HurstParameter::new(0.75).unwrap();
        let grid = GridSpec::uniform(1.0, 9).unwrap();
        assert!(matches!(simulate_hermite_rank2(h, grid, 2, 0, 100), Err(Error::Config(_))));
        let big = GridSpec::uniform(1e4, 9).unwrap();
        assert!(matches!(simulate_hermite_rank2(h, big, 2, 0, 10_000), Err(Error::Config(_))));
    }

    #[test]
    fn small_ensemble_uses_exact_variance() {
        let h = HurstParameter::new(0.75).unwrap();
        let grid = GridSpec::uniform(1.0, 9).unwrap();
        let e = simulate_hermite_rank2(h, grid, 3, 5, 10_000).unwrap();
        assert_eq!(e.n_paths(), 3);
        assert!((0..3).all(|i| e.path(i)[0] == 0.0));
        let expected = 1.0 / (partial_sum_variance(0.875, 10_000) * 1e4f64.powf(-1.5)).sqrt();
        assert!((e.normalization - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn paired_paths_are_uncorrelated() {
        let h = HurstParameter::new(0.75).unwrap();
        let grid = GridSpec::uniform(1.0, 5).unwrap();
        let e = simulate_hermite_rank2(h, grid, 400, 11, 10_000).unwrap();
        let end: Vec<f64> = (0..400).map(|p| e.path(p)[4]).collect();
        let (a, b): (Vec<f64>, Vec<f64>) = end.chunks(2).map(|c| (c[0], c[1])).unzip();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() < 4.0 / 200f64.sqrt(), "corr {corr}");
    }
}
