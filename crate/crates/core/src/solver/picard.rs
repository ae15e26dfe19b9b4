use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{InitialCondition, SolverConfig, SpaceGrid};
use super::operators::Discretization;
use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::rkhs::{norm, TimeFunction};

/// Realizations of a space-time field, stored path-major then time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    n_paths: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn new(times: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let per_path = times.len() * xs.len();
        if per_path == 0 || values.is_empty() || values.len() % per_path != 0 {
            return Err(Error::Shape(format!(
                "{} values do not fill whole {} x {} paths",
                values.len(),
                times.len(),
                xs.len()
            )));
        }
        Ok(Self { n_paths: values.len() / per_path, times, xs, values })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_t(&self) -> usize {
        self.times.len()
    }

    pub fn n_x(&self) -> usize {
        self.xs.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// One realization, time-major (n_t × n_x).
    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.n_t() * self.n_x();
        &self.values[p * n..(p + 1) * n]
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize, j: usize) -> f64 {
        self.values[(p * self.n_t() + i) * self.n_x() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Same field multiplied by a constant.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * factor).collect(), ..self.clone() }
    }

    /// Writes `path_id,t,x,value` rows, keeping every `stride_t`-th time and
    /// every `stride_x`-th point.
    pub fn write_csv(&self, w: &mut impl Write, stride_t: usize, stride_x: usize) -> std::io::Result<()> {
        writeln!(w, "path_id,t,x,value")?;
        for p in 0..self.n_paths {
            for i in (0..self.n_t()).step_by(stride_t.max(1)) {
                for j in (0..self.n_x()).step_by(stride_x.max(1)) {
                    writeln!(w, "{p},{},{},{}", self.times[i], self.xs[j], self.get(p, i, j))?;
                }
            }
        }
        Ok(())
    }

    /// Reads the format written by [`Field::write_csv`]. Rows must come in
    /// path, time, space order on a full (possibly strided) grid.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "path_id,t,x,value" {
            return Err(Error::Format(format!("unexpected field header '{}'", header.trim())));
        }
        let mut rows: Vec<(usize, f64, f64, f64)> = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("malformed field row {}: '{line}'", k + 2));
            let mut it = line.split(',');
            let mut next = || it.next().map(str::trim).ok_or_else(bad);
            let p = next()?.parse::<usize>().map_err(|_| bad())?;
            let t = next()?.parse::<f64>().map_err(|_| bad())?;
            let x = next()?.parse::<f64>().map_err(|_| bad())?;
            let v = next()?.parse::<f64>().map_err(|_| bad())?;
            rows.push((p, t, x, v));
        }
        let first: Vec<_> = rows.iter().take_while(|r| r.0 == 0).collect();
        let mut xs: Vec<f64> = Vec::new();
        for r in &first {
            if r.1 != first[0].1 {
                break;
            }
            xs.push(r.2);
        }
        if xs.is_empty() {
            return Err(Error::Format("field file has no rows".into()));
        }
        let times: Vec<f64> = first.iter().step_by(xs.len()).map(|r| r.1).collect();
        let per_path = times.len() * xs.len();
        if first.len() != per_path || rows.len() % per_path != 0 {
            return Err(Error::Format("field rows do not form a full grid".into()));
        }
        for (k, r) in rows.iter().enumerate() {
            let (p, i, j) = (k / per_path, (k % per_path) / xs.len(), k % xs.len());
            if r.0 != p || r.1 != times[i] || r.2 != xs[j] {
                return Err(Error::Format(format!("field row {} is out of grid order", k + 2)));
            }
        }
        Field::new(times, xs, rows.into_iter().map(|r| r.3).collect())
    }
}

/// sup over (t, x) of the ensemble L² distance.
pub fn field_distance(a: &Field, b: &Field) -> Result<f64> {
    if a.n_paths != b.n_paths || a.n_t() != b.n_t() || a.n_x() != b.n_x() {
        return Err(Error::Shape("fields of different shapes".into()));
    }
    let per_path = a.n_t() * a.n_x();
    let mut sq = vec![0.0; per_path];
    for (k, (u, v)) in a.values.iter().zip(&b.values).enumerate() {
        sq[k % per_path] += (u - v) * (u - v);
    }
    Ok(sq.iter().fold(0.0f64, |m, s| m.max((s / a.n_paths as f64).sqrt())))
}

/// Picard iterates u⁽⁰⁾ = u_lin, u⁽ⁿ⁺¹⁾ = u_lin + 𝒩(u⁽ⁿ⁾) + 𝒮(u⁽ⁿ⁾), all
/// returned.
pub fn picard_iterate(cfg: &SolverConfig, n_iters: usize) -> Result<Vec<Field>> {
    cfg.validate()?;
    if n_iters < 1 {
        return Err(Error::config("n_iters must be at least 1"));
    }
    if cfg.time_grid.t_max > 1.0 {
        return Err(Error::config(format!(
            "the local solution is only computed for T <= 1, got T = {}",
            cfg.time_grid.t_max
        )));
    }
    let disc = Discretization::new(cfg)?;
    let n_paths = cfg.n_paths();
    let increments: Option<Vec<Vec<f64>>> = match (&cfg.noise, cfg.sigma.is_zero()) {
        (Some(noise), false) => Some(
            (0..n_paths)
                .map(|p| noise.path(p).windows(2).map(|w| w[1] - w[0]).collect())
                .collect(),
        ),
        _ => None,
    };
    let times = cfg.time_grid.nodes();
    let xs = cfg.space.xs();
    let start: Vec<f64> = (0..n_paths).flat_map(|_| disc.u_lin().iter().copied()).collect();
    let mut iterates = vec![Field::new(times.clone(), xs.clone(), start)?];
    let sigma = cfg.sigma;
    let sigma_fn = move |u: f64| sigma.eval(u);
    for n in 1..=n_iters {
        let prev = iterates.last().unwrap();
        let rows: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let inc = increments.as_ref().map(|i| i[p].as_slice());
                let s: Option<&dyn Fn(f64) -> f64> = inc.map(|_| &sigma_fn as &dyn Fn(f64) -> f64);
                disc.apply(prev.path(p), cfg.nonlinear, s, inc)
            })
            .collect();
        let next = Field::new(times.clone(), xs.clone(), rows.concat())?;
        if !next.is_finite() {
            return Err(Error::Divergence { iterate: n });
        }
        iterates.push(next);
    }
    Ok(iterates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// d(u⁽ⁿ⁾, u⁽ⁿ⁻¹⁾) for n = 1, 2, …
    pub distances: Vec<f64>,
    /// distances[n] / distances[n−1]
    pub ratios: Vec<f64>,
    /// First n with d(u⁽ⁿ⁾, u⁽ⁿ⁻¹⁾) at round-off level, if any.
    pub converged_at: Option<usize>,
}

impl ContractionReport {
    pub fn all_below_one(&self) -> bool {
        self.ratios.iter().all(|r| *r < 1.0)
    }

    pub fn residual_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1] <= w[0])
    }
}

pub fn contraction_ratio(iterates: &[Field]) -> Result<ContractionReport> {
    if iterates.len() < 3 {
        return Err(Error::config(format!(
            "contraction ratios need at least 3 iterates, got {}",
            iterates.len()
        )));
    }
    let scale = iterates[0].values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut distances = Vec::new();
    let mut converged_at = None;
    for (n, w) in iterates.windows(2).enumerate() {
        let d = field_distance(&w[1], &w[0])?;
        distances.push(d);
        if d <= 1e-13 * scale {
            converged_at = Some(n + 1);
            break;
        }
    }
    let ratios = if converged_at.is_some() {
        distances.windows(2).filter(|w| w[0] > 1e-13 * scale).map(|w| w[1] / w[0]).collect()
    } else {
        distances.windows(2).map(|w| w[1] / w[0]).collect()
    };
    Ok(ContractionReport { distances, ratios, converged_at })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T0Estimate {
    pub t0: f64,
    pub t1: f64,
    pub t2: f64,
    /// Ball radius 2‖u0‖_∞.
    pub m: f64,
    pub c1: f64,
    pub c2_prime: f64,
    pub c4: f64,
    pub c5: f64,
}

const PROBE_TIMES: [f64; 4] = [1.0, 0.25, 0.0625, 0.015625];

/// sup |𝒩(u)| and sup |𝒩(u) − 𝒩(v)| for time-constant probe profiles.
fn burgers_probe(cfg: &SolverConfig, t_p: f64, u: &dyn Fn(f64) -> f64, v: &dyn Fn(f64) -> f64) -> Result<(f64, f64)> {
    let mut probe = cfg.clone();
    probe.noise = None;
    probe.sigma = super::config::SigmaSpec::Constant { c: 0.0 };
    probe.u0 = InitialCondition::Constant { value: 0.0 };
    probe.time_grid = GridSpec::uniform(t_p, 17)?;
    probe.space = SpaceGrid::new(crate::heat_kernel::spatial_half_width(cfg.nu, t_p) + 4.0, 2049)?;
    let disc = Discretization::new(&probe)?;
    let xs = probe.space.xs();
    let fill = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        (0..disc.n_t).flat_map(|_| xs.iter().map(|&x| f(x))).collect()
    };
    let nu_ = disc.nonlinear_term(&fill(u));
    let nv = disc.nonlinear_term(&fill(v));
    let sup = nu_.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let sup_diff = nu_.iter().zip(&nv).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((sup, sup_diff))
}

/// Local existence time from the two smallness conditions of the fixed-point
/// argument, with constants measured on probe fields:
///
/// C₁T^{1/2}M² + C₂′T^{H−1/2}(1+M⁴) ≤ M/2 and C₄T^{1/2}M + C₅T^{H−1/2}(1+M⁴) ≤ ½,
/// M = 2‖u0‖_∞. 𝒩 is probed with a step and a bump of height M; 𝒮 through
/// the isometry E|𝒮|² = ‖Φ‖²_𝓗 on constant probes, where Φ = σ(c) 1_{[0,T]}.
pub fn estimate_t0(cfg: &SolverConfig) -> Result<T0Estimate> {
    let hv = cfg.hurst.value();
    let m = 2.0 * cfg.u0.sup_norm();
    let mp = if m > 0.0 { m } else { 1.0 };
    let eps = 1e-3 * mp;
    let grow = 1.0 + m.powi(4);

    let step = move |a: f64| move |y: f64| {
        if y < 0.0 {
            a
        } else if y == 0.0 {
            a * std::f64::consts::FRAC_1_SQRT_2
        } else {
            0.0
        }
    };
    let bump = move |a: f64| move |y: f64| a * (-2.0 * y * y).exp();

    let (mut c1, mut c4) = (0.0f64, 0.0f64);
    let (mut c2, mut c5) = (0.0f64, 0.0f64);
    let levels: Vec<f64> = (0..=8).map(|k| -mp + 2.0 * mp * k as f64 / 8.0).collect();
    for &t_p in &PROBE_TIMES {
        for (u, v) in [
            (Box::new(step(mp)) as Box<dyn Fn(f64) -> f64>, Box::new(step(mp - eps)) as Box<dyn Fn(f64) -> f64>),
            (Box::new(bump(mp)), Box::new(bump(mp - eps))),
        ] {
            let (sup, diff) = burgers_probe(cfg, t_p, &u, &v)?;
            c1 = c1.max(sup / (t_p.sqrt() * mp * mp));
            c4 = c4.max(diff / (t_p.sqrt() * mp * eps));
        }
        let grid = GridSpec::uniform(t_p, 3)?;
        let ind = TimeFunction::indicator(grid, 0.0, t_p)?;
        let unit = norm(&ind, cfg.hurst).map_err(|e| Error::config(format!("noise probe failed: {e}")))?;
        let shape = t_p.powf(hv - 0.5) * grow;
        for &c in &levels {
            c2 = c2.max(cfg.sigma.eval(c).abs() * unit / shape);
            let d = (cfg.sigma.eval(c) - cfg.sigma.eval(c - 1e-4)).abs() / 1e-4;
            c5 = c5.max(d * unit / shape);
        }
    }
    if ![c1, c2, c4, c5].iter().all(|c| c.is_finite()) {
        return Err(Error::config("constant probes produced non-finite values"));
    }

    let t1 = largest_time(|t| c1 * t.sqrt() * m * m + c2 * t.powf(hv - 0.5) * grow, 0.5 * m);
    let t2 = largest_time(|t| c4 * t.sqrt() * m + c5 * t.powf(hv - 0.5) * grow, 0.5);
    let (t1, t2) = match (t1, t2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::config(format!(
                "no T in (0, 1] satisfies the smallness conditions with M = {m}"
            )))
        }
    };
    Ok(T0Estimate { t0: t1.min(t2).min(1.0), t1, t2, m, c1, c2_prime: c2, c4, c5 })
}

/// Largest T in (0, 1] with lhs(T) <= rhs for an increasing lhs.
fn largest_time(lhs: impl Fn(f64) -> f64, rhs: f64) -> Option<f64> {
    if lhs(1.0) <= rhs {
        return Some(1.0);
    }
    let mut lo = 1e-300f64;
    if !(lhs(lo) <= rhs) || rhs <= 0.0 {
        return None;
    }
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if lhs(mid) <= rhs {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Some(lo)
}

#[cfg(test)]
mod tests {
    use super::super::config::SigmaSpec;
    use super::*;

    fn deterministic(u0: InitialCondition, t_max: f64, n_t: usize, n_x: usize) -> SolverConfig {
        let mut cfg = SolverConfig::preset(t_max).unwrap();
        cfg.u0 = u0;
        cfg.sigma = SigmaSpec::Constant { c: 0.0 };
        cfg.time_grid = GridSpec::uniform(t_max, n_t).unwrap();
        cfg.space = SpaceGrid::for_problem(cfg.nu, t_max, &u0, n_x).unwrap();
        cfg
    }

    #[test]
    fn csv_round_trip() {
        let times = vec![0.0, 0.1, 0.2];
        let xs = vec![-1.0, 0.0, 1.0, 2.0];
        let vals: Vec<f64> = (0..24).map(|k| (k as f64 * 0.37).sin() / 3.0).collect();
        let f = Field::new(times, xs, vals).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf, 1, 1).unwrap();
        let g = Field::read_csv(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        let mut strided = Vec::new();
        f.write_csv(&mut strided, 2, 2).unwrap();
        let h = Field::read_csv(strided.as_slice()).unwrap();
        assert_eq!((h.n_paths(), h.n_t(), h.n_x()), (2, 2, 2));
        assert!(Field::read_csv("a,b\n".as_bytes()).is_err());
        assert!(Field::read_csv("path_id,t,x,value\n0,0,0,zz\n".as_bytes()).is_err());
    }

    #[test]
    fn constants_are_fixed_points() {
        let cfg = deterministic(InitialCondition::Constant { value: 0.8 }, 0.2, 9, 33);
        let it = picard_iterate(&cfg, 3).unwrap();
        for f in &it {
            assert!(f.values().iter().all(|v| (v - 0.8).abs() < 1e-13));
        }
        let rep = contraction_ratio(&it).unwrap();
        assert_eq!(rep.converged_at, Some(1));
    }

    #[test]
    fn missing_noise_and_long_horizon_are_config_errors() {
        let mut cfg = SolverConfig::preset(0.1).unwrap();
        assert!(matches!(picard_iterate(&cfg, 1), Err(Error::Config(_))));
        cfg.sigma = SigmaSpec::Constant { c: 0.0 };
        cfg.time_grid = GridSpec::uniform(2.0, 9).unwrap();
        assert!(matches!(picard_iterate(&cfg, 1), Err(Error::Config(_))));
        assert!(matches!(picard_iterate(&deterministic(InitialCondition::preset(), 0.1, 5, 9), 0), Err(Error::Config(_))));
    }

    #[test]
    fn too_few_iterates_refused() {
        let cfg = deterministic(InitialCondition::preset(), 0.1, 5, 17);
        let it = picard_iterate(&cfg, 1).unwrap();
        assert!(contraction_ratio(&it).is_err());
    }

    #[test]
    fn largest_time_bisection() {
        let t = largest_time(|t| t.sqrt(), 0.5).unwrap();
        assert!((t - 0.25).abs() < 1e-10);
        assert_eq!(largest_time(|t| t, 2.0), Some(1.0));
        assert_eq!(largest_time(|_| 1.0, 0.5), None);
    }

    #[test]
    fn measured_burgers_constant_matches_step_value() {
        // a step of height M gives |𝒩| = ½M²∫_0^T G_s(0) ds = M²T^{1/2}/(2√(πν)) at
        // the jump, the largest value any profile bounded by M can produce;
        // the discrete step resolves the jump to within half a cell
        let cfg = SolverConfig::preset(0.1).unwrap();
        let est = estimate_t0(&cfg).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert!(est.c1 <= exact && est.c1 > 0.97 * exact, "{}", est.c1);
        assert!(est.t0 > 0.0 && est.t0 <= 1.0);
        assert_eq!(est.t0, est.t1.min(est.t2));
    }
}
