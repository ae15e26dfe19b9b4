//! Named property checks grouped into suites, including the numbered
//! acceptance criteria. Each check reports its measured value against a
//! stated tolerance and never panics on numerical failure.

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat_kernel::{self, Viscosity};
use crate::numerics::{integrate_singular_double, loglog_fit, GridSpec, QuadTolerance};
use crate::regularity::{self, linear_second_moment, lower_bound_check};
use crate::rkhs::{self, TimeFunction};
use crate::rosenblatt::{self, PathEnsemble};
use crate::solver::{self, Field, InitialCondition, SigmaSpec, SolverConfig, SpaceGrid};
use crate::special::{self, HurstParameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Acceptance criterion number, if the check is one.
    pub criterion: Option<u8>,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: String,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        match self.criterion {
            Some(c) => write!(f, "{tag} criterion {c:>2} {}", self.name)?,
            None => write!(f, "{tag} {}", self.name)?,
        }
        write!(f, ": measured {:.6e} ({}) [{:.1}s] {}", self.measured, self.tolerance, self.seconds, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Special,
    Rkhs,
    Heat,
    Rosenblatt,
    Solver,
    Regularity,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 7] = ["special", "rkhs", "heat", "rosenblatt", "solver", "regularity", "all"];

    fn members(self) -> Vec<Suite> {
        use Suite::*;
        match self {
            All => vec![Special, Heat, Rkhs, Rosenblatt, Solver, Regularity],
            s => vec![s],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = *self as usize;
        f.write_str(Self::NAMES[i])
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        use Suite::*;
        Ok(match s {
            "special" => Special,
            "rkhs" => Rkhs,
            "heat" => Heat,
            "rosenblatt" => Rosenblatt,
            "solver" => Solver,
            "regularity" => Regularity,
            "all" => All,
            _ => {
                return Err(Error::config(format!(
                    "unknown suite '{s}', expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub hursts: Vec<f64>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { hursts: vec![0.6, 0.75, 0.9], seed: 20240601 }
    }
}

impl VerifyOptions {
    fn hursts(&self) -> Result<Vec<HurstParameter>> {
        if self.hursts.is_empty() {
            return Err(Error::config("at least one Hurst value is required"));
        }
        self.hursts.iter().map(|&h| HurstParameter::new(h)).collect()
    }

    /// The Hurst value used by the Monte Carlo checks: 0.75 when listed,
    /// otherwise the first entry.
    fn mc_hurst(&self) -> Result<HurstParameter> {
        let hs = self.hursts()?;
        Ok(hs.iter().copied().find(|h| h.value() == 0.75).unwrap_or(hs[0]))
    }
}

/// Shared artifacts reused by several Monte Carlo checks.
pub struct Context {
    opts: VerifyOptions,
    rosenblatt: OnceCell<std::result::Result<Arc<PathEnsemble>, String>>,
    additive: OnceCell<std::result::Result<Arc<Field>, String>>,
}

impl Context {
    pub fn new(opts: VerifyOptions) -> Self {
        Self { opts, rosenblatt: OnceCell::new(), additive: OnceCell::new() }
    }

    pub fn options(&self) -> &VerifyOptions {
        &self.opts
    }

    fn rosenblatt_ensemble(&self) -> Result<Arc<PathEnsemble>> {
        self.rosenblatt
            .get_or_init(|| {
                let h = self.opts.mc_hurst().map_err(|e| e.to_string())?;
                rosenblatt::simulate_double_integral(h, simulator_grid(), SIMULATOR_PATHS, self.opts.seed, 4096)
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(Error::Format)
    }

    fn additive_field(&self) -> Result<Arc<Field>> {
        self.additive
            .get_or_init(|| additive_convolution(&self.opts).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::Format)
    }
}

type CheckFn = fn(&Context) -> Result<Outcome>;

struct Outcome {
    passed: bool,
    measured: f64,
    tolerance: String,
    detail: String,
}

struct Check {
    name: &'static str,
    criterion: Option<u8>,
    suite: Suite,
    run: CheckFn,
}

const CHECKS: &[Check] = &[
    Check { name: "mittag-leffler and gronwall majorant", criterion: Some(13), suite: Suite::Solver, run: crit_gronwall },
    Check { name: "gamma recursion and beta symmetry", criterion: None, suite: Suite::Special, run: special_identities },
    Check { name: "mittag-leffler reduces to exp", criterion: None, suite: Suite::Special, run: ml_exp },
    Check { name: "heat kernel mass and peak", criterion: None, suite: Suite::Heat, run: heat_mass },
    Check { name: "heat kernel norm scaling", criterion: Some(3), suite: Suite::Heat, run: crit_heat_scaling },
    Check { name: "indicator covariance identity", criterion: Some(1), suite: Suite::Rkhs, run: crit_indicator_covariance },
    Check { name: "singular reference integral", criterion: Some(2), suite: Suite::Rkhs, run: crit_reference_integral },
    Check { name: "dual-route norm agreement", criterion: Some(4), suite: Suite::Rkhs, run: crit_dual_route },
    Check { name: "convolution algebra bound and factorization", criterion: Some(5), suite: Suite::Rkhs, run: crit_banach },
    Check { name: "simulator covariance, skewness and moment ratio", criterion: Some(6), suite: Suite::Rosenblatt, run: crit_simulator },
    Check { name: "cross-method marginal agreement", criterion: Some(7), suite: Suite::Rosenblatt, run: crit_cross_method },
    Check { name: "additive convolution isometry", criterion: Some(8), suite: Suite::Solver, run: crit_isometry },
    Check { name: "picard contraction", criterion: Some(11), suite: Suite::Solver, run: crit_picard },
    Check { name: "deterministic burgers reduction", criterion: Some(12), suite: Suite::Solver, run: crit_burgers },
    Check { name: "temporal exponent pinning", criterion: Some(9), suite: Suite::Regularity, run: crit_temporal },
    Check { name: "spatial exponent", criterion: Some(10), suite: Suite::Regularity, run: crit_spatial },
    Check { name: "gaussian hypercontractivity ratio", criterion: None, suite: Suite::Regularity, run: gaussian_hypercontractivity },
    Check { name: "monte carlo against quadrature second moment", criterion: None, suite: Suite::Regularity, run: mc_vs_quadrature },
];

fn execute(check: &Check, ctx: &Context) -> CheckResult {
    let start = Instant::now();
    let out = (check.run)(ctx).unwrap_or_else(|e| Outcome {
        passed: false,
        measured: f64::NAN,
        tolerance: "check did not complete".into(),
        detail: e.to_string(),
    });
    CheckResult {
        name: check.name.to_string(),
        criterion: check.criterion,
        passed: out.passed,
        measured: out.measured,
        tolerance: out.tolerance,
        detail: out.detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every check of the selected suite, calling `progress` after each.
pub fn run_suite(suite: Suite, ctx: &Context, mut progress: impl FnMut(&CheckResult)) -> Vec<CheckResult> {
    let members = suite.members();
    let mut out = Vec::new();
    for m in members {
        for c in CHECKS.iter().filter(|c| c.suite == m) {
            let r = execute(c, ctx);
            progress(&r);
            out.push(r);
        }
    }
    out
}

/// Numbers of all acceptance criteria, in order.
pub fn criteria() -> Vec<u8> {
    let mut v: Vec<u8> = CHECKS.iter().filter_map(|c| c.criterion).collect();
    v.sort_unstable();
    v
}

/// Runs a single acceptance criterion.
pub fn run_criterion(number: u8, ctx: &Context) -> Result<CheckResult> {
    CHECKS
        .iter()
        .find(|c| c.criterion == Some(number))
        .map(|c| execute(c, ctx))
        .ok_or_else(|| Error::config(format!("no acceptance criterion {number}")))
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", items.join(", "))
}

fn crit_indicator_covariance(ctx: &Context) -> Result<Outcome> {
    let grid = GridSpec::uniform(1.0, 11)?;
    let ts = [0.2, 0.4, 0.6, 0.8, 1.0];
    let mut worst: f64 = 0.0;
    for h in ctx.opts.hursts()? {
        let fs = ts.iter().map(|&t| TimeFunction::indicator(grid, 0.0, t)).collect::<Result<Vec<_>>>()?;
        for (i, &t) in ts.iter().enumerate() {
            for (j, &s) in ts.iter().enumerate() {
                let v = rkhs::inner_product(&fs[i], &fs[j], h)?;
                let exact = rosenblatt::covariance(h, t, s);
                worst = worst.max((v - exact).abs() / exact);
            }
        }
    }
    Ok(Outcome {
        passed: worst < 1e-6,
        measured: worst,
        tolerance: "max relative error < 1e-6".into(),
        detail: "5x5 (t, s) grid per Hurst value".into(),
    })
}

fn crit_reference_integral(ctx: &Context) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for h in ctx.opts.hursts()? {
        let hv = h.value();
        for t in [0.5, 1.0, 2.0] {
            let v = integrate_singular_double(|_, _| 1.0, h, 0.0, t, QuadTolerance::default().with_rel(1e-10))?;
            let exact = t.powf(2.0 * hv) / (hv * (2.0 * hv - 1.0));
            worst = worst.max((v.value - exact).abs() / exact);
        }
    }
    Ok(Outcome {
        passed: worst < 1e-7,
        measured: worst,
        tolerance: "max relative error < 1e-7".into(),
        detail: "t in {0.5, 1, 2}".into(),
    })
}

fn crit_heat_scaling(ctx: &Context) -> Result<Outcome> {
    let nu = Viscosity::new(1.0)?;
    let ts: Vec<f64> = (0..7).map(|k| 2f64.powi(-k)).collect();
    let mut worst: f64 = 0.0;
    let mut slopes = Vec::new();
    for h in ctx.opts.hursts()? {
        let v = ts.iter().map(|&t| rkhs::heat_kernel_h_norm_sq(t, h, nu)).collect::<Result<Vec<_>>>()?;
        let fit = loglog_fit(&ts, &v)?;
        slopes.push(fit.slope);
        worst = worst.max((fit.slope - 2.0 * h.value()).abs());
    }
    Ok(Outcome {
        passed: worst <= 0.002,
        measured: worst,
        tolerance: "|slope - 2H| <= 0.002".into(),
        detail: format!("slopes {} for H {:?}", fmt_list(&slopes), ctx.opts.hursts),
    })
}

const CORPUS_SIZE: usize = 200;

fn corpus_grid() -> Result<GridSpec> {
    GridSpec::uniform(1.0, 129)
}

fn crit_dual_route(ctx: &Context) -> Result<Outcome> {
    let corpus = rkhs::corpus(corpus_grid()?, CORPUS_SIZE, ctx.opts.seed)?;
    let mut worst: f64 = 0.0;
    let mut per_h = Vec::new();
    for h in ctx.opts.hursts()? {
        let mut w: f64 = 0.0;
        for f in &corpus {
            let a = rkhs::norm(f, h)?;
            let b = rkhs::norm_via_frac(f, h)?;
            w = w.max((a - b).abs() / a);
        }
        per_h.push(w);
        worst = worst.max(w);
    }
    Ok(Outcome {
        passed: worst < 1e-5,
        measured: worst,
        tolerance: "max relative discrepancy < 1e-5".into(),
        detail: format!("{CORPUS_SIZE} functions, worst per H {}", fmt_list(&per_h)),
    })
}

const BANACH_PAIRS: usize = 50;

fn crit_banach(ctx: &Context) -> Result<Outcome> {
    let corpus = rkhs::corpus(corpus_grid()?, 2 * BANACH_PAIRS, ctx.opts.seed ^ 0x5bd1)?;
    let mut c_max: f64 = 0.0;
    let mut fact_worst: f64 = 0.0;
    let t_end = corpus[0].t_max();
    for h in ctx.opts.hursts()? {
        for pair in corpus.chunks(2) {
            let (f, g) = (&pair[0], &pair[1]);
            let conv = rkhs::convolve(f, g)?;
            let denom = rkhs::norm(f, h)? * rkhs::norm(g, h)?;
            if denom > 0.0 {
                c_max = c_max.max(rkhs::norm(&conv, h)? / denom);
            }
            let lhs = rkhs::frac_integral_at(&conv, h, t_end)?;
            let rhs = rkhs::frac_convolution_at(f, g, h, t_end)?;
            fact_worst = fact_worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
        }
    }
    Ok(Outcome {
        passed: c_max.is_finite() && fact_worst < 1e-6,
        measured: fact_worst,
        tolerance: "finite C and factorization relative error < 1e-6".into(),
        detail: format!("C = {c_max:.6}, {BANACH_PAIRS} pairs per H, factorization checked at t = {t_end}"),
    })
}

const SIMULATOR_PATHS: usize = 10_000;

fn simulator_grid() -> GridSpec {
    GridSpec::uniform(2.0, 129).expect("static grid")
}

const COV_PAIRS: [(f64, f64); 10] = [
    (0.25, 0.25),
    (0.5, 0.25),
    (1.0, 0.5),
    (1.0, 1.0),
    (1.5, 0.75),
    (2.0, 1.0),
    (2.0, 2.0),
    (0.75, 1.25),
    (1.75, 0.5),
    (0.125, 1.875),
];

fn crit_simulator(ctx: &Context) -> Result<Outcome> {
    let ens = ctx.rosenblatt_ensemble()?;
    let h = ens.h;
    let mut worst_z: f64 = 0.0;
    for &(t, s) in &COV_PAIRS {
        let est = rosenblatt::empirical_covariance(&ens, t, s)?;
        worst_z = worst_z.max(est.z_score(rosenblatt::covariance(h, t, s)).abs());
    }
    let k3 = rosenblatt::empirical_cumulants(&ens, 1.0, 3)?[2];
    let k3_z = k3.z_score(0.0).abs();
    let hc = regularity::hypercontractivity_check(&ens.marginal(1.0)?, 2, ctx.opts.seed)?;
    let passed = worst_z <= 3.0 && k3_z > 2.576 && hc.ci_low <= 3.0;
    Ok(Outcome {
        passed,
        measured: worst_z,
        tolerance: "covariance |z| <= 3, third cumulant |z| > 2.576, L4/L2 <= 3 within CI".into(),
        detail: format!(
            "{} paths at H = {}; kappa3 = {:.4} +- {:.4} (oracle {:.4}); L4/L2 = {:.4} [{:.4}, {:.4}]",
            ens.n_paths(),
            h,
            k3.value,
            k3.std_error,
            rosenblatt::rosenblatt_third_cumulant(h),
            hc.ratio,
            hc.ci_low,
            hc.ci_high
        ),
    })
}

fn crit_cross_method(ctx: &Context) -> Result<Outcome> {
    let di = ctx.rosenblatt_ensemble()?;
    let hermite = rosenblatt::simulate_hermite_rank2(di.h, simulator_grid(), SIMULATOR_PATHS, ctx.opts.seed.wrapping_add(1), 1 << 14)?;
    let ks = rosenblatt::ks_two_sample(&di.marginal(1.0)?, &hermite.marginal(1.0)?)?;
    Ok(Outcome {
        passed: ks.p_value >= 0.01,
        measured: ks.p_value,
        tolerance: "KS p-value >= 0.01".into(),
        detail: format!("KS statistic {:.5}, {} paths per method, H = {}", ks.statistic, SIMULATOR_PATHS, di.h),
    })
}

const ADDITIVE_PATHS: usize = 2000;

/// 𝒮(1) for σ ≡ 1, u0 ≡ 0 and the Burgers term switched off.
fn additive_convolution(opts: &VerifyOptions) -> Result<Field> {
    let h = opts.mc_hurst()?;
    let mut cfg = SolverConfig::preset(1.0)?;
    cfg.hurst = h;
    cfg.sigma = SigmaSpec::Constant { c: 1.0 };
    cfg.u0 = InitialCondition::Constant { value: 0.0 };
    cfg.nonlinear = false;
    cfg.time_grid = GridSpec::uniform(1.0, 33)?;
    cfg.space = SpaceGrid::new(4.0, 129)?;
    let noise = rosenblatt::simulate_double_integral(h, cfg.time_grid, ADDITIVE_PATHS, opts.seed ^ 0xadd, 4096)?;
    let cfg = cfg.with_noise(Arc::new(noise));
    let mut it = solver::picard_iterate(&cfg, 1)?;
    Ok(it.pop().expect("one iterate"))
}

fn crit_isometry(ctx: &Context) -> Result<Outcome> {
    let field = ctx.additive_field()?;
    let h = ctx.opts.mc_hurst()?;
    let nu = Viscosity::new(1.0)?;
    let j = field.xs.iter().position(|x| x.abs() < 1e-12).unwrap_or(field.n_x() / 2);
    let mut worst_z: f64 = 0.0;
    let mut rows = Vec::new();
    for t in [0.25, 0.375, 0.5, 0.75, 1.0] {
        let i = field.times.iter().position(|s| (s - t).abs() < 1e-12).ok_or_else(|| Error::domain("time off grid"))?;
        let sq: Vec<f64> = (0..field.n_paths()).map(|p| field.get(p, i, j).powi(2)).collect();
        let n = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / n;
        let se = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let target = rkhs::heat_kernel_h_norm_sq(t, h, nu)?;
        let z = (mean - target) / se;
        worst_z = worst_z.max(z.abs());
        rows.push(format!("t={t}: {mean:.4}+-{se:.4} vs {target:.4}"));
    }
    Ok(Outcome {
        passed: worst_z <= 3.0,
        measured: worst_z,
        tolerance: "|z| <= 3 at every time".into(),
        detail: rows.join("; "),
    })
}

fn crit_spatial(ctx: &Context) -> Result<Outcome> {
    let field = ctx.additive_field()?;
    let dx = field.xs[1] - field.xs[0];
    let lags: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|k| k * dx).collect();
    match regularity::spatial_structure_function(&field, 1.0, 2.0, &lags) {
        Ok(rep) => Ok(Outcome {
            passed: (rep.fitted_exponent - 0.5).abs() <= 0.1,
            measured: rep.fitted_exponent,
            tolerance: "exponent within 0.5 +- 0.1".into(),
            detail: format!("fit residual {:.3e}, {} lags used", rep.fit_residual, rep.lags_used),
        }),
        Err(Error::FitRefused(msg)) => Ok(Outcome {
            passed: false,
            measured: f64::NAN,
            tolerance: "exponent within 0.5 +- 0.1".into(),
            detail: format!("fit refused: {msg}"),
        }),
        Err(e) => Err(e),
    }
}

fn crit_temporal(ctx: &Context) -> Result<Outcome> {
    let nu = Viscosity::new(1.0)?;
    let lags: Vec<f64> = (0..7).map(|k| 2f64.powi(-k)).collect();
    let mut worst: f64 = 0.0;
    let mut min_ratio = f64::INFINITY;
    let mut notes = Vec::new();
    for h in ctx.opts.hursts()? {
        let m = lags.iter().map(|&l| linear_second_moment(0.0, l, h, nu)).collect::<Result<Vec<_>>>()?;
        let fit = loglog_fit(&lags, &m)?;
        worst = worst.max((fit.slope - (2.0 * h.value() - 1.0)).abs());
        let lb = lower_bound_check(h, nu, &lags)?;
        min_ratio = min_ratio.min(lb.min_ratio);
        notes.push(format!(
            "H={h}: slope {:.5}, min ratio {:.4e}, ratio slope {:.3}",
            fit.slope, lb.min_ratio, lb.max_ratio_slope
        ));
    }
    Ok(Outcome {
        passed: worst <= 0.02 && min_ratio > 0.0,
        measured: worst,
        tolerance: "|slope - (2H-1)| <= 0.02 and min ratio > 0".into(),
        detail: notes.join("; "),
    })
}

fn crit_picard(ctx: &Context) -> Result<Outcome> {
    let h = ctx.opts.mc_hurst()?;
    let mut probe = SolverConfig::preset(0.1)?;
    probe.hurst = h;
    let est = solver::estimate_t0(&probe)?;
    let mut cfg = SolverConfig::preset(est.t0.min(1.0))?;
    cfg.hurst = h;
    let noise = rosenblatt::simulate_double_integral(h, cfg.time_grid, 100, ctx.opts.seed ^ 0x91c4, 4096)?;
    let cfg = cfg.with_noise(Arc::new(noise));
    let iterates = solver::picard_iterate(&cfg, 5)?;
    let rep = solver::contraction_ratio(&iterates)?;
    let worst = rep.ratios.iter().fold(0.0f64, |m, r| m.max(*r));
    Ok(Outcome {
        passed: rep.all_below_one() && rep.residual_decreasing(),
        measured: worst,
        tolerance: "all ratios < 1 and residual decreasing".into(),
        detail: format!("T0 = {:.5}, ratios {}, distances {:?}", est.t0, fmt_list(&rep.ratios), rep.distances),
    })
}

fn crit_burgers(_ctx: &Context) -> Result<Outcome> {
    let t_end = 0.25;
    let u0 = InitialCondition::preset();
    let refine = 16;
    let mut dxs = Vec::new();
    let mut errs = Vec::new();
    for nx in [33, 65, 129] {
        let mut c = SolverConfig::preset(t_end)?;
        c.sigma = SigmaSpec::Constant { c: 0.0 };
        c.time_grid = GridSpec::uniform(t_end, 129)?;
        c.space = SpaceGrid::for_problem(c.nu, t_end, &u0, nx)?;
        let it = solver::picard_iterate(&c, 20)?;
        let last = it.last().expect("iterates");
        let fine = SpaceGrid::new(c.space.half_width, (nx - 1) * refine + 1)?;
        let oracle = solver::burgers_finite_difference(&u0, c.nu, fine, t_end)?;
        let n_t = last.n_t();
        let err = (0..nx).map(|j| (last.get(0, n_t - 1, j) - oracle[refine * j]).abs()).fold(0.0, f64::max);
        dxs.push(c.space.dx());
        errs.push(err);
    }
    let order = loglog_fit(&dxs, &errs)?.slope;
    Ok(Outcome {
        passed: order >= 1.0,
        measured: order,
        tolerance: "convergence order >= 1".into(),
        detail: format!("sup errors {:?} at dx {}", errs, fmt_list(&dxs)),
    })
}

fn crit_gronwall(ctx: &Context) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.opts.seed ^ 0x6e0);
    let grid = GridSpec::uniform(1.0, 65)?;
    let nodes = grid.nodes();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let a = rng.random_range(0.1..2.0);
        let b = rng.random_range(0.1..2.0);
        let beta = rng.random_range(0.4..1.0);
        let it = solver::gronwall_iterates(a, b, beta, &grid, 30)?;
        for f in &it {
            for (i, &t) in nodes.iter().enumerate() {
                worst = worst.max(f[i] / solver::gronwall_bound(a, b, beta, t)?);
            }
        }
    }
    let ml = ml_exp_error()?;
    Ok(Outcome {
        passed: worst <= 1.0 + 1e-12 && ml <= 1e-10,
        measured: worst,
        tolerance: "iterate/bound <= 1 and E_1 relative error <= 1e-10".into(),
        detail: format!("20 triples; E_1 vs exp max relative error {ml:.2e}"),
    })
}

fn ml_exp_error() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..=200 {
        let z = -5.0 + 0.05 * k as f64;
        worst = worst.max((special::mittag_leffler(1.0, z)? - z.exp()).abs() / z.exp());
    }
    Ok(worst)
}

fn ml_exp(_ctx: &Context) -> Result<Outcome> {
    let e = ml_exp_error()?;
    let cosh = (special::mittag_leffler(2.0, 4.0)? - 2f64.cosh()).abs() / 2f64.cosh();
    let worst = e.max(cosh);
    Ok(Outcome {
        passed: worst <= 1e-10,
        measured: worst,
        tolerance: "relative error <= 1e-10".into(),
        detail: "E_1(z) = exp(z) on [-5, 5], E_2(z^2) = cosh(z)".into(),
    })
}

fn special_identities(_ctx: &Context) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for k in 1..40 {
        let x = 0.137 * k as f64;
        let g = special::gamma_fn(x)?;
        worst = worst.max((special::gamma_fn(x + 1.0)? - x * g).abs() / (x * g));
        let y = 0.3 + 0.05 * k as f64;
        let b = special::beta_fn(x, y)?;
        worst = worst.max((b - special::beta_fn(y, x)?).abs() / b);
    }
    Ok(Outcome {
        passed: worst <= 1e-12,
        measured: worst,
        tolerance: "relative error <= 1e-12".into(),
        detail: "Gamma(x+1) = x Gamma(x), B(x, y) = B(y, x)".into(),
    })
}

fn heat_mass(_ctx: &Context) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for nu in [0.5, 1.0, 2.0] {
        for t in [0.01, 0.3, 2.0] {
            let w = heat_kernel::spatial_half_width(Viscosity::new(nu)?, t);
            let m = crate::numerics::integrate_1d(|x| heat_kernel::g_raw(t, x, nu), -w, w, QuadTolerance::default())?;
            worst = worst.max((m.value - 1.0).abs());
        }
    }
    Ok(Outcome {
        passed: worst <= 1e-9,
        measured: worst,
        tolerance: "|mass - 1| <= 1e-9".into(),
        detail: "nu in {0.5, 1, 2}, t in {0.01, 0.3, 2}".into(),
    })
}

fn gaussian_hypercontractivity(ctx: &Context) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.opts.seed ^ 0x9a55);
    let g: Vec<f64> = (0..20_000).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let rep = regularity::hypercontractivity_check(&g, 1, ctx.opts.seed)?;
    let target = 3f64.powf(0.25);
    Ok(Outcome {
        passed: rep.ci_low <= target && target <= rep.ci_high,
        measured: rep.ratio,
        tolerance: format!("CI contains 3^(1/4) = {target:.5}"),
        detail: format!("CI [{:.5}, {:.5}]", rep.ci_low, rep.ci_high),
    })
}

fn mc_vs_quadrature(ctx: &Context) -> Result<Outcome> {
    let field = ctx.additive_field()?;
    let h = ctx.opts.mc_hurst()?;
    let nu = Viscosity::new(1.0)?;
    let j = field.xs.iter().position(|x| x.abs() < 1e-12).unwrap_or(field.n_x() / 2);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.opts.seed ^ 0x2c);
    let n_t = field.n_t();
    let mut worst_z: f64 = 0.0;
    for _ in 0..10 {
        let a = rng.random_range(0..n_t - 1);
        let b = rng.random_range(a + 1..n_t);
        let (s, t) = (field.times[a], field.times[b]);
        let sq: Vec<f64> = (0..field.n_paths()).map(|p| (field.get(p, b, j) - field.get(p, a, j)).powi(2)).collect();
        let n = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / n;
        let se = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let target = linear_second_moment(s, t, h, nu)?;
        worst_z = worst_z.max(((mean - target) / se).abs());
    }
    Ok(Outcome {
        passed: worst_z <= 3.0,
        measured: worst_z,
        tolerance: "|z| <= 3 at 10 random (s, t) pairs".into(),
        detail: "ensemble second moment of increments at x = 0".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for name in Suite::NAMES {
            let s: Suite = name.parse().unwrap();
            assert_eq!(s.to_string(), name);
        }
        assert!(matches!("bogus".parse::<Suite>(), Err(Error::Config(_))));
    }

    #[test]
    fn thirteen_criteria() {
        assert_eq!(criteria(), (1..=13).collect::<Vec<u8>>());
    }

    #[test]
    fn special_suite_passes() {
        let ctx = Context::new(VerifyOptions::default());
        let res = run_suite(Suite::Special, &ctx, |_| {});
        assert_eq!(res.len(), 2);
        assert!(res.iter().all(|r| r.passed), "{res:?}");
    }

    #[test]
    fn bad_hurst_is_reported_not_panicking() {
        let ctx = Context::new(VerifyOptions { hursts: vec![0.3], seed: 1 });
        let r = run_criterion(1, &ctx).unwrap();
        assert!(!r.passed);
        assert!(r.detail.contains("0.3"));
    }
}
