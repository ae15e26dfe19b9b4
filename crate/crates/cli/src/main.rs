//! Command-line front end: constants, kernel norms, simulation, solving,
//! regularity analysis and the verification suites.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or configuration error,
//! 3 I/O error, 4 numerical divergence.

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use rosenblatt_spde::heat_kernel::Viscosity;
use rosenblatt_spde::numerics::{loglog_fit, GridSpec};
use rosenblatt_spde::regularity::{spatial_structure_function, temporal_structure_function, StructureFunctionReport};
use rosenblatt_spde::rosenblatt::{self, Method, PathEnsemble};
use rosenblatt_spde::solver::{self, Field};
use rosenblatt_spde::verify::{self, Context, Suite, VerifyOptions};
use rosenblatt_spde::{rkhs, special, Error, HurstParameter};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "rosenblatt-spde", version, about = "Stochastic Burgers equation with Rosenblatt noise: constants, simulation, solver and checks")]
struct Cli {
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "ROSENBLATT_SPDE_THREADS")]
    threads: Option<usize>,

    /// Where to write the run manifest (JSON). Defaults to a file next to
    /// the outputs, or `<subcommand>.manifest.json` in the working directory.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    DoubleIntegral,
    Hermite,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::DoubleIntegral => Method::DoubleIntegral,
            MethodArg::Hermite => Method::HermiteRank2,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Direction {
    Time,
    Space,
}

#[derive(Subcommand)]
enum Command {
    /// Print the kernel and embedding constants for a Hurst index.
    Constants {
        /// Hurst index in (1/2, 1).
        #[arg(long, default_value_t = 0.75)]
        hurst: f64,
        /// Viscosity.
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Write the table to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared 𝓗-norms of the heat kernel and their log-log scaling in t.
    KernelNorms {
        #[arg(long, default_value_t = 0.75)]
        hurst: f64,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        /// Comma-separated times (default: 1, 1/2, ..., 1/64).
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// Write the JSON report to a file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a Rosenblatt path ensemble and write a binary cache.
    Simulate {
        #[arg(long, default_value_t = 0.75)]
        hurst: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        /// Grid nodes including t = 0.
        #[arg(long, default_value_t = 128)]
        n_points: usize,
        #[arg(long, default_value_t = 100)]
        n_paths: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MethodArg::DoubleIntegral)]
        method: MethodArg,
        /// Cells over [0, T] for the double-integral method.
        #[arg(long, default_value_t = 4096)]
        n_quad_nodes: usize,
        /// Inner summands per unit time for the Hermite method.
        #[arg(long, default_value_t = 16384)]
        n_inner: usize,
        /// Cache file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run Picard iteration for a configuration and noise ensemble.
    Solve {
        /// Key-value configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Noise cache written by `simulate`; required unless sigma = zero.
        #[arg(long)]
        noise: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        iters: usize,
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep every n-th time in the field CSV.
        #[arg(long, default_value_t = 1)]
        stride_t: usize,
        /// Keep every n-th grid point in the field CSV.
        #[arg(long, default_value_t = 1)]
        stride_x: usize,
    },
    /// Structure function and Hölder exponent of a solved field.
    Regularity {
        /// Field CSV written by `solve`.
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_enum, default_value_t = Direction::Time)]
        direction: Direction,
        /// Fixed point x (time direction) or time t (space direction);
        /// defaults to x = 0 or the final time.
        #[arg(long)]
        at: Option<f64>,
        /// Moment order.
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Lags as multiples of the grid spacing.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        lags: Vec<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run property checks and acceptance criteria.
    Verify {
        /// special, rkhs, heat, rosenblatt, solver, regularity or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Comma-separated Hurst indices.
        #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.75, 0.9])]
        hurst: Vec<f64>,
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: 3, message: format!("{}: {e}", path.display()) }
    }

    fn check(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) | Error::Config(_) | Error::Shape(_) => 2,
            Error::Io(_) | Error::Format(_) => 3,
            Error::Divergence { .. } => 4,
            Error::Accuracy { .. } | Error::UndefinedRatio(_) | Error::FitRefused(_) => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let manifest = cli.manifest.clone();
    let result = match cli.command {
        Command::Constants { hurst, nu, format, out } => cmd_constants(hurst, nu, format, out, manifest),
        Command::KernelNorms { hurst, nu, times, out } => cmd_kernel_norms(hurst, nu, times, out, manifest),
        Command::Simulate { hurst, t_max, n_points, n_paths, seed, method, n_quad_nodes, n_inner, out } => {
            cmd_simulate(SimulateArgs { hurst, t_max, n_points, n_paths, seed, method, n_quad_nodes, n_inner, out }, manifest)
        }
        Command::Solve { config, noise, iters, out_dir, stride_t, stride_x } => {
            cmd_solve(&config, noise.as_deref(), iters, &out_dir, (stride_t, stride_x), manifest)
        }
        Command::Regularity { field, direction, at, p, lags, out_dir } => {
            cmd_regularity(&field, direction, at, p, &lags, &out_dir, manifest)
        }
        Command::Verify { suite, hurst, seed } => cmd_verify(&suite, hurst, seed, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn manifest_path(explicit: Option<PathBuf>, default: PathBuf) -> PathBuf {
    explicit.unwrap_or(default)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn finish(m: ManifestBuilder, path: &Path) -> CmdResult {
    let passed = m.all_passed();
    let written = m.write(path).map_err(|e| Failure::io(path, e))?;
    if passed {
        Ok(())
    } else {
        let failed: Vec<&str> = written.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::check(format!("failed checks: {}", failed.join(", "))))
    }
}

fn emit(out: Option<&Path>, text: &str, m: &mut ManifestBuilder) -> CmdResult {
    match out {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Failure::io(p, e))?;
            m.output(p);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_constants(hurst: f64, nu: f64, format: Format, out: Option<PathBuf>, manifest: Option<PathBuf>) -> CmdResult {
    let h = HurstParameter::new(hurst)?;
    let n = Viscosity::new(nu)?;
    let forms = rkhs::c_h_nu_forms(h, n)?;
    let rows = [
        ("c_hr", "Rosenblatt kernel normalization c_H^R", special::constant_c_hr(h)),
        ("c_hbr", "Rosenblatt/fBm link constant c_H^{B,R}", special::constant_c_hbr(h)),
        ("c_emb", "embedding constant", special::constant_c_emb(h)),
        ("c_h", "fractional-integral constant c_H", special::constant_c_h(h)),
        ("c_h_nu", "heat-kernel norm constant C_{H,nu} (quadrature)", forms.semigroup_form),
        ("c_h_nu_product", "C_{H,nu}, product-weight form (quadrature)", forms.product_form),
    ];
    let text = match format {
        Format::Text => {
            let mut s = format!("# H = {hurst}, nu = {nu}\n");
            for (name, label, v) in &rows {
                s.push_str(&format!("{name:<15} {v:<24.16e} {label}\n"));
            }
            s
        }
        Format::Csv => {
            let mut s = String::from("name,value\n");
            for (name, _, v) in &rows {
                s.push_str(&format!("{name},{v:e}\n"));
            }
            s
        }
        Format::Json => {
            let obj: serde_json::Map<String, serde_json::Value> =
                rows.iter().map(|(k, _, v)| (k.to_string(), json!(v))).collect();
            serde_json::to_string_pretty(&json!({ "hurst": hurst, "nu": nu, "constants": obj })).expect("json") + "\n"
        }
    };
    let mut m = ManifestBuilder::new("constants", json!({ "hurst": hurst, "nu": nu, "format": format!("{format:?}").to_lowercase() }), None);
    emit(out.as_deref(), &text, &mut m)?;
    m.check("constants finite and positive", rows.iter().all(|r| r.2.is_finite() && r.2 > 0.0), "");
    m.results(json!(rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>()));
    let default = out.as_ref().map_or_else(|| PathBuf::from("constants.manifest.json"), |p| with_suffix(p, ".manifest.json"));
    finish(m, &manifest_path(manifest, default))
}

fn cmd_kernel_norms(hurst: f64, nu: f64, times: Vec<f64>, out: Option<PathBuf>, manifest: Option<PathBuf>) -> CmdResult {
    let h = HurstParameter::new(hurst)?;
    let n = Viscosity::new(nu)?;
    let times = if times.is_empty() { (0..7).map(|k| 2f64.powi(-k)).collect() } else { times };
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    for &t in &times {
        let sq = rkhs::heat_kernel_h_norm_sq(t, h, n)?;
        let sk = rkhs::singular_kernel_norm(0.0, t, h)?;
        norms.push(sq);
        rows.push(json!({ "t": t, "heat_kernel_norm_sq": sq, "singular_kernel_norm": sk.norm }));
    }
    let slope = if times.len() >= 2 { Some(loglog_fit(&times, &norms)?.slope) } else { None };
    let report = json!({
        "hurst": hurst,
        "nu": nu,
        "rows": rows,
        "fitted_slope": slope,
        "slope_2h": 2.0 * hurst,
        "slope_2h_minus_half": 2.0 * hurst - 0.5,
    });
    let text = serde_json::to_string_pretty(&report).expect("json") + "\n";
    let mut m = ManifestBuilder::new("kernel-norms", json!({ "hurst": hurst, "nu": nu, "times": times }), None);
    emit(out.as_deref(), &text, &mut m)?;
    m.check("norms finite and positive", norms.iter().all(|v| v.is_finite() && *v > 0.0), "");
    m.results(report);
    let default = out.as_ref().map_or_else(|| PathBuf::from("kernel-norms.manifest.json"), |p| with_suffix(p, ".manifest.json"));
    finish(m, &manifest_path(manifest, default))
}

struct SimulateArgs {
    hurst: f64,
    t_max: f64,
    n_points: usize,
    n_paths: usize,
    seed: u64,
    method: MethodArg,
    n_quad_nodes: usize,
    n_inner: usize,
    out: PathBuf,
}

fn cmd_simulate(a: SimulateArgs, manifest: Option<PathBuf>) -> CmdResult {
    let h = HurstParameter::new(a.hurst)?;
    if a.n_paths == 0 {
        return Err(Failure::usage("--n-paths must be at least 1"));
    }
    let grid = GridSpec::uniform(a.t_max, a.n_points)?;
    // fail on an unwritable destination before spending time simulating
    File::create(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    let ens = match a.method {
        MethodArg::DoubleIntegral => rosenblatt::simulate_double_integral(h, grid, a.n_paths, a.seed, a.n_quad_nodes)?,
        MethodArg::Hermite => rosenblatt::simulate_hermite_rank2(h, grid, a.n_paths, a.seed, a.n_inner)?,
    };
    rosenblatt::write_cache(&ens, &a.out).map_err(|e| match e {
        Error::Io(io) => Failure::io(&a.out, io),
        other => other.into(),
    })?;
    let config = json!({
        "hurst": a.hurst,
        "t_max": a.t_max,
        "n_points": a.n_points,
        "n_paths": a.n_paths,
        "method": Method::from(a.method).to_string(),
        "n_quad_nodes": a.n_quad_nodes,
        "n_inner": a.n_inner,
        "out": a.out,
    });
    let mut m = ManifestBuilder::new("simulate", config, Some(a.seed));
    m.output(&a.out);
    let spot = covariance_spot_check(&ens)?;
    for (name, ok, detail) in &spot {
        println!("{} {name}: {detail}", if *ok { "ok  " } else { "off " });
    }
    m.results(json!({
        "normalization": ens.normalization,
        "covariance_spot_check": spot.iter().map(|(n, ok, d)| json!({ "pair": n, "within_3se": ok, "detail": d })).collect::<Vec<_>>(),
    }));
    println!("wrote {} paths x {} points to {}", ens.n_paths(), ens.n_points(), a.out.display());
    let default = with_suffix(&a.out, ".manifest.json");
    finish(m, &manifest_path(manifest, default))
}

/// Empirical covariance against ½(t^{2H}+s^{2H}−|t−s|^{2H}) at a few grid pairs.
fn covariance_spot_check(ens: &PathEnsemble) -> Result<Vec<(String, bool, String)>, Failure> {
    let n = ens.n_points() - 1;
    let t_end = ens.grid.node(n);
    let t_mid = ens.grid.node(n / 2);
    let t_q = ens.grid.node(n / 4);
    let mut out = Vec::new();
    for (t, s) in [(t_end, t_end), (t_end, t_mid), (t_mid, t_q)] {
        let est = rosenblatt::empirical_covariance(ens, t, s)?;
        let target = rosenblatt::covariance(ens.h, t, s);
        let z = est.z_score(target);
        out.push((
            format!("({t:.4}, {s:.4})"),
            z.abs() <= 3.0,
            format!("{:.5} +- {:.5} vs {:.5} (z = {:.2})", est.value, est.std_error, target, z),
        ));
    }
    Ok(out)
}

fn cmd_solve(
    config: &Path,
    noise: Option<&Path>,
    iters: usize,
    out_dir: &Path,
    strides: (usize, usize),
    manifest: Option<PathBuf>,
) -> CmdResult {
    let text = std::fs::read_to_string(config).map_err(|e| Failure::io(config, e))?;
    let kv = config::KeyValues::parse(&text)?;
    let ensemble = match noise {
        Some(p) if !p.exists() => return Err(Failure::usage(format!("noise file {} does not exist", p.display()))),
        Some(p) => Some(rosenblatt::read_cache(p)?),
        None => None,
    };
    let (mut cfg, estimated) = config::solver_config(&kv, ensemble.as_ref())?;
    let stochastic = !cfg.sigma.is_zero();
    if stochastic {
        match ensemble {
            Some(e) => cfg = cfg.with_noise(std::sync::Arc::new(e)),
            None => return Err(Failure::usage("sigma is not zero, so --noise is required")),
        }
    }
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;

    let iterates = solver::picard_iterate(&cfg, iters)?;
    // a failed constants probe does not invalidate the run itself
    let t0 = solver::estimate_t0(&cfg).map_err(|e| e.to_string());
    let last = iterates.last().expect("at least one iterate");
    let field_path = out_dir.join("field.csv");
    let write_field = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&field_path)?);
        last.write_csv(&mut w, strides.0, strides.1)?;
        w.flush()
    };
    write_field().map_err(|e| Failure::io(&field_path, e))?;

    let report = if iterates.len() >= 3 { Some(solver::contraction_ratio(&iterates)?) } else { None };
    let mut m = ManifestBuilder::new(
        "solve",
        json!({
            "config_file": config,
            "keys": kv_json(&kv),
            "resolved": serde_json::to_value(&cfg).expect("config serializes"),
            "noise": noise,
            "iters": iters,
            "stride_t": strides.0,
            "stride_x": strides.1,
        }),
        cfg.noise.as_ref().map(|n| n.master_seed),
    );
    m.output(&field_path);
    if let Some(r) = &report {
        m.check("contraction ratios below one", r.all_below_one(), format!("{:?}", r.ratios));
        m.check("residual decreasing", r.residual_decreasing(), format!("{:?}", r.distances));
    }
    m.results(json!({
        "stochastic_terms": if stochastic { "included" } else { "skipped" },
        "t_max": cfg.time_grid.t_max,
        "t_max_estimated": estimated,
        "t0": t0.as_ref().ok().map(|e| e.t0),
        "t0_estimate": t0.as_ref().ok(),
        "t0_error": t0.as_ref().err(),
        "n_paths": cfg.n_paths(),
        "contraction": report,
    }));
    let t0_text = match &t0 {
        Ok(e) => format!("{:.5}", e.t0),
        Err(msg) => format!("unavailable: {msg}"),
    };
    println!(
        "solved {} path(s) on {} x {} to T = {:.5} (T0 = {t0_text}); field in {}",
        cfg.n_paths(),
        cfg.time_grid.n_points,
        cfg.space.n_x,
        cfg.time_grid.t_max,
        field_path.display()
    );
    if let Some(r) = &report {
        println!("contraction ratios {:?}", r.ratios);
    }
    finish(m, &manifest_path(manifest, out_dir.join("manifest.json")))
}

fn kv_json(kv: &config::KeyValues) -> serde_json::Value {
    let keys = [
        "hurst", "nu", "t_max", "n_t", "n_x", "half_width", "nonlinear", "rel_tol", "sigma", "sigma_c",
        "sigma_amplitude", "sigma_frequency", "sigma_slope", "u0", "u0_value", "u0_amplitude", "u0_center",
        "u0_width", "u0_half_width",
    ];
    let map: serde_json::Map<String, serde_json::Value> =
        keys.iter().filter_map(|k| kv.get(k).map(|v| (k.to_string(), json!(v)))).collect();
    serde_json::Value::Object(map)
}

fn cmd_regularity(
    field_path: &Path,
    direction: Direction,
    at: Option<f64>,
    p: f64,
    lags: &[usize],
    out_dir: &Path,
    manifest: Option<PathBuf>,
) -> CmdResult {
    let file = File::open(field_path).map_err(|e| Failure::io(field_path, e))?;
    let field = Field::read_csv(BufReader::new(file))?;
    if field.n_t() < 2 || field.n_x() < 2 {
        return Err(Failure::usage("the field needs at least two times and two grid points"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
    let (spacing, at) = match direction {
        Direction::Time => (field.times[1] - field.times[0], at.unwrap_or(0.0)),
        Direction::Space => (field.xs[1] - field.xs[0], at.unwrap_or(*field.times.last().expect("times"))),
    };
    let lag_values: Vec<f64> = lags.iter().map(|&k| k as f64 * spacing).collect();
    let result = match direction {
        Direction::Time => temporal_structure_function(&field, at, p, &lag_values),
        Direction::Space => spatial_structure_function(&field, at, p, &lag_values),
    };
    let config = json!({
        "field": field_path,
        "direction": format!("{direction:?}").to_lowercase(),
        "at": at,
        "p": p,
        "lags": lags,
    });
    let mut m = ManifestBuilder::new("regularity", config, None);
    match result {
        Ok(rep) => {
            let json_path = out_dir.join("structure.json");
            let csv_path = out_dir.join("structure.csv");
            std::fs::write(&json_path, serde_json::to_string_pretty(&rep).expect("json") + "\n")
                .map_err(|e| Failure::io(&json_path, e))?;
            write_structure_csv(&rep, &csv_path).map_err(|e| Failure::io(&csv_path, e))?;
            m.output(&json_path);
            m.output(&csv_path);
            m.check("exponent fit", true, format!("exponent {:.4}, residual {:.3e}", rep.fitted_exponent, rep.fit_residual));
            println!("fitted exponent {:.5} (residual {:.3e}, {} lags used)", rep.fitted_exponent, rep.fit_residual, rep.lags_used);
            m.results(serde_json::to_value(&rep).expect("json"));
        }
        Err(Error::FitRefused(msg)) => {
            println!("fit refused: {msg}");
            m.check("exponent fit", false, format!("fit refused: {msg}"));
        }
        Err(e) => return Err(e.into()),
    }
    finish(m, &manifest_path(manifest, out_dir.join("manifest.json")))
}

fn write_structure_csv(rep: &StructureFunctionReport, path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "lag,moment")?;
    for (lag, moment) in rep.rows() {
        writeln!(w, "{lag},{moment}")?;
    }
    w.flush()
}

fn cmd_verify(suite: &str, hursts: Vec<f64>, seed: u64, manifest: Option<PathBuf>) -> CmdResult {
    let suite: Suite = suite.parse().map_err(|e: Error| Failure::usage(e.to_string()))?;
    for &h in &hursts {
        HurstParameter::new(h)?;
    }
    let opts = VerifyOptions { hursts, seed };
    let mut m = ManifestBuilder::new("verify", json!({ "suite": suite.to_string(), "hurst": opts.hursts }), Some(seed));
    let ctx = Context::new(opts);
    let results = verify::run_suite(suite, &ctx, |r| println!("{r}"));
    for r in &results {
        m.check(r.name.clone(), r.passed, r.detail.clone());
    }
    m.results(serde_json::to_value(&results).expect("json"));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} checks passed", results.len());
    finish(m, &manifest_path(manifest, PathBuf::from("verify.manifest.json")))
}
