use serde::{Deserialize, Serialize};

use super::PathEnsemble;
use crate::error::{Error, Result};

/// A sample statistic and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// |value − target| in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }

    pub fn within(&self, target: f64, n_sigma: f64) -> bool {
        (self.value - target).abs() <= n_sigma * self.std_error
    }
}

/// Sample mean of ℛ_tℛ_s. For a mean the jackknife standard error reduces
/// to the usual s/√n.
pub fn empirical_covariance(ens: &PathEnsemble, t: f64, s: f64) -> Result<Estimate> {
    let i = ens.index_of(t)?;
    let j = ens.index_of(s)?;
    let prod: Vec<f64> =
        (0..ens.n_paths()).map(|p| ens.path(p)[i] * ens.path(p)[j]).collect();
    Ok(mean_estimate(&prod))
}

fn mean_estimate(x: &[f64]) -> Estimate {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return Estimate { value: mean, std_error: f64::INFINITY };
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate { value: mean, std_error: (var / n).sqrt() }
}

/// Leave-one-out jackknife of a statistic computed from the first four
/// power sums of the data.
fn jackknife(x: &[f64], stat: impl Fn(&[f64; 5]) -> f64) -> Estimate {
    let mut sums = [0.0; 5];
    for &v in x {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            *s += p;
            p *= v;
        }
    }
    let full = stat(&sums);
    let n = x.len();
    if n < 3 {
        return Estimate { value: full, std_error: f64::INFINITY };
    }
    let mut loo = Vec::with_capacity(n);
    for &v in x {
        let mut s = sums;
        let mut p = 1.0;
        for e in s.iter_mut() {
            *e -= p;
            p *= v;
        }
        loo.push(stat(&s));
    }
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    Estimate { value: full, std_error: (var * (n - 1) as f64 / n as f64).sqrt() }
}

fn central_moments(s: &[f64; 5]) -> (f64, f64, f64, f64) {
    let n = s[0];
    let m1 = s[1] / n;
    let r2 = s[2] / n;
    let r3 = s[3] / n;
    let r4 = s[4] / n;
    let c2 = r2 - m1 * m1;
    let c3 = r3 - 3.0 * m1 * r2 + 2.0 * m1.powi(3);
    let c4 = r4 - 4.0 * m1 * r3 + 6.0 * m1 * m1 * r2 - 3.0 * m1.powi(4);
    (m1, c2, c3, c4)
}

/// Sample cumulants κ₁..κ_{max_order} of ℛ_t (max_order ≤ 4) with
/// jackknife standard errors.
pub fn empirical_cumulants(ens: &PathEnsemble, t: f64, max_order: usize) -> Result<Vec<Estimate>> {
    if !(1..=4).contains(&max_order) {
        return Err(Error::config(format!("cumulant order must be 1..=4, got {max_order}")));
    }
    let raw = ens.marginal(t)?;
    // Centring first keeps the power sums well conditioned.
    let shift = raw.iter().sum::<f64>() / raw.len() as f64;
    let x: Vec<f64> = raw.iter().map(|v| v - shift).collect();
    let all = [
        jackknife(&x, |s| central_moments(s).0 + shift),
        jackknife(&x, |s| central_moments(s).1),
        jackknife(&x, |s| central_moments(s).2),
        jackknife(&x, |s| {
            let (_, c2, _, c4) = central_moments(s);
            c4 - 3.0 * c2 * c2
        }),
    ];
    Ok(all[..max_order].to_vec())
}

/// (E ℛ_t⁴)^{1/4} / (E ℛ_t²)^{1/2} with a jackknife standard error.
pub fn moment_ratio_l4_l2(ens: &PathEnsemble, t: f64) -> Result<Estimate> {
    let x = ens.marginal(t)?;
    Ok(jackknife(&x, |s| (s[4] / s[0]).powf(0.25) / (s[2] / s[0]).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("two-sample test needs non-empty samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::domain("two-sample test needs finite samples"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult { statistic: d, p_value: kolmogorov_q(lambda) })
}

fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn ks_same_law_accepted_shifted_law_rejected() {
        let a = normals(1, 4000);
        let b = normals(2, 3000);
        assert!(ks_two_sample(&a, &b).unwrap().p_value > 0.01);
        let c: Vec<f64> = b.iter().map(|v| v + 0.2).collect();
        assert!(ks_two_sample(&a, &c).unwrap().p_value < 1e-4);
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
    }

    #[test]
    fn jackknife_of_mean_matches_textbook_error() {
        let x = normals(5, 500);
        let jk = jackknife(&x, |s| s[1] / s[0]);
        let direct = mean_estimate(&x);
        assert!((jk.value - direct.value).abs() < 1e-12);
        assert!((jk.std_error - direct.std_error).abs() < 1e-10);
    }

    #[test]
    fn chi_square_cumulants() {
        // (Z² − 1)/√2 has κ₃ = 2√2 and κ₄ = 12.
        let x: Vec<f64> = normals(11, 200_000).iter().map(|z| (z * z - 1.0) / 2f64.sqrt()).collect();
        let (_, c2, c3, c4) = {
            let mut s = [0.0; 5];
            for &v in &x {
                s[0] += 1.0;
                s[1] += v;
                s[2] += v * v;
                s[3] += v.powi(3);
                s[4] += v.powi(4);
            }
            central_moments(&s)
        };
        assert!((c2 - 1.0).abs() < 0.02);
        assert!((c3 - 2.0 * 2f64.sqrt()).abs() < 0.15);
        assert!((c4 - 3.0 * c2 * c2 - 12.0).abs() < 1.5);
    }
}
