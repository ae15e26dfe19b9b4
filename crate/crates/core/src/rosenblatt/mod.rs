//! Rosenblatt sample paths: two independent simulators, a binary ensemble
//! cache, and the statistics used to check them against each other.

mod cache;
mod double_integral;
mod hermite;
mod stats;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::special::{beta_fn, HurstParameter};

pub use cache::{read_cache, write_cache, CACHE_MAGIC};
pub use double_integral::{
    simulate_double_integral, simulate_double_integral_with, truncation_for, DoubleIntegralConfig,
};
pub use hermite::{simulate_hermite_rank2, HERMITE_MAX_FFT_LEN};
pub use stats::{
    empirical_covariance, empirical_cumulants, ks_two_sample, moment_ratio_l4_l2, Estimate,
    KsResult,
};

/// Below this many paths the ensemble is scaled with the analytic variance
/// instead of the sample second moment.
pub const MIN_PATHS_EMPIRICAL_NORMALIZATION: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DoubleIntegral,
    HermiteRank2,
}

impl Method {
    pub fn tag(self) -> u8 {
        match self {
            Method::DoubleIntegral => 1,
            Method::HermiteRank2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Method::DoubleIntegral),
            2 => Some(Method::HermiteRank2),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::DoubleIntegral => "double-integral",
            Method::HermiteRank2 => "hermite",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double-integral" | "double_integral" => Ok(Method::DoubleIntegral),
            "hermite" | "hermite-rank2" | "hermite_rank2" => Ok(Method::HermiteRank2),
            _ => Err(Error::config(format!(
                "unknown method '{s}' (expected double-integral or hermite)"
            ))),
        }
    }
}

/// An immutable set of sample paths on a common time grid.
///
/// `paths` is row-major, one row of `grid.n_points` values per path.
/// `normalization` is the factor applied to the raw simulator output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub grid: GridSpec,
    pub h: HurstParameter,
    pub method: Method,
    pub master_seed: u64,
    pub normalization: f64,
    n_paths: usize,
    paths: Vec<f64>,
}

impl PathEnsemble {
    pub fn from_rows(
        grid: GridSpec,
        h: HurstParameter,
        method: Method,
        master_seed: u64,
        normalization: f64,
        paths: Vec<f64>,
    ) -> Result<Self> {
        grid.validate()?;
        let n = grid.n_points;
        if paths.is_empty() || paths.len() % n != 0 {
            return Err(Error::Shape(format!(
                "{} values do not form whole rows of {n} points",
                paths.len()
            )));
        }
        if let Some(i) = paths.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!("non-finite value in path {}", i / n)));
        }
        Ok(Self { grid, h, method, master_seed, normalization, n_paths: paths.len() / n, paths })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = self.grid.n_points;
        &self.paths[i * n..(i + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.paths
    }

    /// All path values at grid index `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.paths[i * self.grid.n_points + k]).collect()
    }

    /// Grid index of `t`, refusing off-grid times.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        self.grid.index_of(t).ok_or_else(|| {
            Error::domain(format!("time {t} is not a grid node; interpolation is refused"))
        })
    }

    /// Column of values at time `t` (must be a grid node).
    pub fn marginal(&self, t: f64) -> Result<Vec<f64>> {
        Ok(self.column(self.index_of(t)?))
    }
}

/// Covariance of the normalized process, ½(t^{2H} + s^{2H} − |t−s|^{2H}).
pub fn covariance(h: HurstParameter, t: f64, s: f64) -> f64 {
    let two_h = 2.0 * h.value();
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

/// Variance at time t of the raw double integral with kernel
/// ∫_0^t (s−y₁)_+^{H/2−1}(s−y₂)_+^{H/2−1} ds.
pub fn raw_variance(h: HurstParameter, t: f64) -> f64 {
    let hv = h.value();
    let b = beta_fn(hv / 2.0, 1.0 - hv).expect("positive arguments");
    2.0 * b * b * t.powf(2.0 * hv) / h.alpha_h()
}

/// Third cumulant of the unit-variance Rosenblatt variable ℛ_1.
///
/// For a second-chaos variable with kernel operator A and E X² = 1 the third
/// cumulant is 8 tr(A³); here that trace reduces to a triple integral of
/// |s_i − s_j|^{H−1} over the unit cube, which has the closed form
/// 2B(H,H)/(H(3H−1)).
pub fn rosenblatt_third_cumulant(h: HurstParameter) -> f64 {
    let hv = h.value();
    let cube = 2.0 * beta_fn(hv, hv).expect("positive arguments") / (hv * (3.0 * hv - 1.0));
    8.0 * (h.alpha_h() / 2.0).powf(1.5) * cube
}

pub(crate) fn path_rng(master_seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path);
    rng
}

pub(crate) fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        return Err(Error::config("n_paths must be at least 1"));
    }
    Ok(())
}

/// Time at which the ensemble is normalized: 1 if it is a grid node,
/// otherwise the grid end point.
pub(crate) fn normalization_time(grid: &GridSpec) -> (usize, f64) {
    match grid.index_of(1.0) {
        Some(k) => (k, 1.0),
        None => (grid.n_points - 1, grid.t_max),
    }
}

/// Scales raw rows in place so the second moment at the normalization time
/// equals t^{2H}. Returns the factor used.
pub(crate) fn normalize_rows(
    rows: &mut [f64],
    grid: &GridSpec,
    h: HurstParameter,
    analytic_raw_variance: impl Fn(f64) -> f64,
) -> Result<f64> {
    let n = grid.n_points;
    let n_paths = rows.len() / n;
    let (k, t) = normalization_time(grid);
    let target = t.powf(2.0 * h.value());
    let second_moment = if n_paths >= MIN_PATHS_EMPIRICAL_NORMALIZATION {
        rows.iter().skip(k).step_by(n).map(|v| v * v).sum::<f64>() / n_paths as f64
    } else {
        analytic_raw_variance(t)
    };
    if !(second_moment > 0.0) || !second_moment.is_finite() {
        return Err(Error::Divergence { iterate: 0 });
    }
    let factor = (target / second_moment).sqrt();
    rows.iter_mut().for_each(|v| *v *= factor);
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_examples() {
        let h = HurstParameter::new(0.75).unwrap();
        assert_relative_eq!(covariance(h, 1.0, 2.0), 2f64.sqrt(), epsilon = 1e-14);
        assert_eq!(covariance(h, 0.7, 0.0), 0.0);
        assert_relative_eq!(covariance(h, 1.0, 1.0), 1.0);
    }

    #[test]
    fn third_cumulant_tends_to_chi_square_limit() {
        let near_one = HurstParameter::new(1.0 - 1e-9).unwrap();
        assert_relative_eq!(rosenblatt_third_cumulant(near_one), 2.0 * 2f64.sqrt(), epsilon = 1e-6);
        let h = HurstParameter::new(0.75).unwrap();
        let k3 = rosenblatt_third_cumulant(h);
        assert!(k3 > 0.0 && k3 < 2.0 * 2f64.sqrt());
    }

    #[test]
    fn method_round_trips() {
        for m in [Method::DoubleIntegral, Method::HermiteRank2] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
            assert_eq!(Method::from_tag(m.tag()), Some(m));
        }
        assert!("brownian".parse::<Method>().is_err());
    }

    #[test]
    fn streams_are_distinct() {
        use rand::Rng;
        let a: u64 = path_rng(7, 0).random();
        let b: u64 = path_rng(7, 1).random();
        let c: u64 = path_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }
}
