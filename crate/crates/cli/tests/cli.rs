use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rosenblatt-spde"));
    c.env_remove("ROSENBLATT_SPDE_THREADS");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("manifest exists");
    let v: serde_json::Value = serde_json::from_str(&text).expect("valid json");
    for out in v["outputs"].as_array().expect("outputs") {
        assert!(Path::new(out.as_str().unwrap()).exists(), "listed output {out} missing");
    }
    for key in ["subcommand", "config", "seed", "version", "duration_seconds", "checks"] {
        assert!(v.get(key).is_some(), "manifest lacks {key}");
    }
    v
}

#[test]
fn help_on_every_subcommand() {
    let dir = TempDir::new().unwrap();
    for sub in ["constants", "kernel-norms", "simulate", "solve", "regularity", "verify"] {
        let o = run(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(stdout(&o).contains("--threads"), "{sub} help lacks --threads");
    }
    let o = run(dir.path(), &["simulate", "--help"]);
    for flag in ["--hurst", "--t-max", "--n-points", "--n-paths", "--seed", "--method", "--out"] {
        assert!(stdout(&o).contains(flag), "simulate help lacks {flag}");
    }
}

#[test]
fn constants_formats() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["constants", "--hurst", "0.75", "--nu", "1.0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for name in ["c_hr", "c_hbr", "c_emb", "c_h_nu"] {
        assert!(stdout(&o).contains(name));
    }
    manifest(&dir.path().join("constants.manifest.json"));

    let o = run(dir.path(), &["constants", "--hurst", "0.75", "--format", "csv"]);
    assert_eq!(stdout(&o).lines().next(), Some("name,value"));

    let o = run(dir.path(), &["constants", "--hurst", "0.75", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let emb = v["constants"]["c_emb"].as_f64().unwrap();
    // (0.75 · 0.5 · B(0.5, 0.75))^{1/2}, B(0.5, 0.75) = 2.3963...
    assert!((emb - (0.375f64 * 2.396280469471184).sqrt()).abs() < 1e-9);
}

#[test]
fn constants_rejects_low_hurst() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["constants", "--hurst", "0.4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(1/2, 1)"), "{}", stderr(&o));
}

#[test]
fn kernel_norms_report() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("norms.json");
    let o = run(dir.path(), &["kernel-norms", "--hurst", "0.75", "--times", "0.25,0.5,1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    manifest(&dir.path().join("norms.json.manifest.json"));
}

#[test]
fn simulate_is_deterministic_and_validated() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.bin");
    let b = dir.path().join("b.bin");
    let args = |out: &Path| {
        vec![
            "simulate".to_string(),
            "--n-paths".into(),
            "40".into(),
            "--n-points".into(),
            "33".into(),
            "--n-quad-nodes".into(),
            "512".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            out.to_str().unwrap().to_string(),
        ]
    };
    let o = bin().current_dir(dir.path()).args(args(&a)).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = bin().current_dir(dir.path()).args(args(&b)).arg("--threads").arg("1").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = manifest(&dir.path().join("a.bin.manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["method"], "double-integral");

    let o = run(dir.path(), &["simulate", "--n-paths", "0", "--out", "x.bin"]);
    assert_eq!(code(&o), 2);
    let o = run(dir.path(), &["simulate", "--method", "fourier", "--out", "x.bin"]);
    assert_eq!(code(&o), 2);
    let o = run(dir.path(), &["simulate", "--n-paths", "2", "--out", "/nonexistent-dir/x.bin"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn threads_env_zero_is_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = bin().current_dir(dir.path()).env("ROSENBLATT_SPDE_THREADS", "0").args(["constants"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

const DETERMINISTIC: &str = "# heat plus Burgers, no noise\nsigma = zero\nt_max = 0.1\nn_t = 17\nn_x = 65\n";

#[test]
fn solve_deterministic_then_regularity() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, DETERMINISTIC).unwrap();
    let out = dir.path().join("out");
    let o = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--iters", "4", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["results"]["stochastic_terms"], "skipped");
    assert!(m["results"]["contraction"]["ratios"].as_array().unwrap().len() >= 2);
    assert!(m["results"]["t0"].as_f64().unwrap() > 0.0);
    let field = out.join("field.csv");
    let header = std::fs::read_to_string(&field).unwrap();
    assert!(header.starts_with("path_id,t,x,value\n"));

    let reg = dir.path().join("reg");
    let o = run(
        dir.path(),
        &["regularity", "--field", field.to_str().unwrap(), "--direction", "time", "--lags", "1,2,3,4", "--out-dir", reg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let csv = std::fs::read_to_string(reg.join("structure.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("lag,moment"));
    assert_eq!(csv.lines().count(), 5);
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(reg.join("structure.json")).unwrap()).unwrap();
    // smooth deterministic heat flow away from t = 0
    assert!(rep["fitted_exponent"].as_f64().unwrap() >= 0.5);
    manifest(&reg.join("manifest.json"));

    let o = run(
        dir.path(),
        &["regularity", "--field", field.to_str().unwrap(), "--lags", "1,2,3", "--out-dir", reg.to_str().unwrap()],
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn solve_validation() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("noisy.cfg");
    std::fs::write(&cfg, "sigma = cosine\nt_max = 0.05\n").unwrap();
    let out = dir.path().join("o");
    let o = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(
        dir.path(),
        &["solve", "--config", cfg.to_str().unwrap(), "--noise", "missing.bin", "--out-dir", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 2);
    std::fs::write(&cfg, "sigma = cosine\nt_max 0.05\n").unwrap();
    let o = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = run(dir.path(), &["solve", "--config", "nope.cfg", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
}

#[test]
fn solve_blow_up_exits_four() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("blow.cfg");
    // a huge bump far beyond the local existence time
    std::fs::write(&cfg, "sigma = zero\nt_max = 1\nn_t = 9\nn_x = 33\nu0_amplitude = 1e150\n").unwrap();
    let out = dir.path().join("o");
    let o = run(dir.path(), &["solve", "--config", cfg.to_str().unwrap(), "--iters", "6", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), stderr(&o));
    assert!(stderr(&o).contains("iterate"));
}

#[test]
fn solve_with_noise() {
    let dir = TempDir::new().unwrap();
    let noise = dir.path().join("noise.bin");
    let o = run(
        dir.path(),
        &["simulate", "--n-paths", "4", "--n-points", "17", "--t-max", "0.05", "--n-quad-nodes", "256", "--out", noise.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "n_x = 33\n").unwrap();
    let out = dir.path().join("o");
    let o = run(
        dir.path(),
        &["solve", "--config", cfg.to_str().unwrap(), "--noise", noise.to_str().unwrap(), "--iters", "3", "--out-dir", out.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["results"]["stochastic_terms"], "included");
    assert_eq!(m["results"]["n_paths"], 4);
    assert_eq!(m["seed"], 1);
}

#[test]
fn verify_suites() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify", "--suite", "special"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let m = manifest(&dir.path().join("verify.manifest.json"));
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));

    let o = run(dir.path(), &["verify", "--suite", "everything"]);
    assert_eq!(code(&o), 2);
    let o = run(dir.path(), &["verify", "--suite", "special", "--hurst", "0.3"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_failure_exits_one() {
    let dir = TempDir::new().unwrap();
    // the heat suite contains the 2H scaling criterion, which does not hold
    let o = run(dir.path(), &["verify", "--suite", "heat", "--hurst", "0.75"]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("FAIL criterion  3"));
    assert!(stderr(&o).contains("heat kernel norm scaling"));
}
