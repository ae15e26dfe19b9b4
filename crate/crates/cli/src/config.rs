//! Flat `key = value` solver configuration files.
//!
//! ```text
//! # preset-like run
//! hurst = 0.75
//! nu = 1.0
//! t_max = auto          # estimated local existence time
//! n_t = 128
//! n_x = 256
//! sigma = cosine        # zero | constant | cosine | tanh
//! sigma_amplitude = 0.5
//! sigma_frequency = 1.0
//! u0 = gaussian_bump    # constant | gaussian_bump | tent
//! u0_amplitude = 1.0
//! u0_width = 1.0
//! ```

use std::collections::BTreeMap;

use rosenblatt_spde::heat_kernel::Viscosity;
use rosenblatt_spde::numerics::{GridSpec, QuadTolerance};
use rosenblatt_spde::rosenblatt::PathEnsemble;
use rosenblatt_spde::solver::{estimate_t0, InitialCondition, SigmaSpec, SolverConfig, SpaceGrid};
use rosenblatt_spde::{Error, HurstParameter, Result};

const KEYS: &[&str] = &[
    "hurst",
    "nu",
    "t_max",
    "n_t",
    "n_x",
    "half_width",
    "nonlinear",
    "rel_tol",
    "sigma",
    "sigma_c",
    "sigma_amplitude",
    "sigma_frequency",
    "sigma_slope",
    "u0",
    "u0_value",
    "u0_amplitude",
    "u0_center",
    "u0_width",
    "u0_half_width",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected 'key = value', got '{}'", n + 1, raw.trim())))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::config(format!("line {}: unknown key '{k}'", n + 1)));
            }
            if v.is_empty() {
                return Err(Error::config(format!("line {}: key '{k}' has no value", n + 1)));
            }
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::config(format!("line {}: duplicate key '{k}'", n + 1)));
            }
        }
        Ok(Self(map))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::config(format!("key '{key}': '{v}' is not a finite number"))),
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| Error::config(format!("key '{key}': '{v}' is not a count"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::config(format!("key '{key}': expected true or false, got '{v}'"))),
        }
    }
}

fn sigma_from(kv: &KeyValues) -> Result<SigmaSpec> {
    let amp = || kv.num("sigma_amplitude", 0.5);
    let s = match kv.get("sigma").unwrap_or("cosine") {
        "zero" => SigmaSpec::Constant { c: 0.0 },
        "constant" => SigmaSpec::Constant { c: kv.num("sigma_c", 1.0)? },
        "cosine" => SigmaSpec::Cosine { amplitude: amp()?, frequency: kv.num("sigma_frequency", 1.0)? },
        "tanh" => SigmaSpec::Tanh { amplitude: amp()?, slope: kv.num("sigma_slope", 1.0)? },
        other => return Err(Error::config(format!("unknown sigma family '{other}'"))),
    };
    Ok(s)
}

fn u0_from(kv: &KeyValues) -> Result<InitialCondition> {
    let amp = || kv.num("u0_amplitude", 1.0);
    let center = || kv.num("u0_center", 0.0);
    let u = match kv.get("u0").unwrap_or("gaussian_bump") {
        "constant" => InitialCondition::Constant { value: kv.num("u0_value", 0.0)? },
        "gaussian_bump" => InitialCondition::GaussianBump { amplitude: amp()?, center: center()?, width: kv.num("u0_width", 1.0)? },
        "tent" => InitialCondition::Tent { amplitude: amp()?, center: center()?, half_width: kv.num("u0_half_width", 1.0)? },
        other => return Err(Error::config(format!("unknown initial condition '{other}'"))),
    };
    Ok(u)
}

/// Builds the solver configuration. The time horizon is `t_max` when given,
/// else the noise grid's horizon, else the estimated local existence time.
/// The returned flag tells whether the horizon was estimated.
pub fn solver_config(kv: &KeyValues, noise: Option<&PathEnsemble>) -> Result<(SolverConfig, bool)> {
    let nu = Viscosity::new(kv.num("nu", 1.0)?)?;
    let hurst = HurstParameter::new(kv.num("hurst", 0.75)?)?;
    let sigma = sigma_from(kv)?;
    let u0 = u0_from(kv)?;
    let n_x = kv.count("n_x", 256)?;
    let default_nt = noise.map_or(128, |n| n.grid.n_points);
    let n_t = kv.count("n_t", default_nt)?;
    let mut tol = QuadTolerance::default();
    if kv.get("rel_tol").is_some() {
        tol = tol.with_rel(kv.num("rel_tol", 0.0)?);
    }

    let build = |t_max: f64| -> Result<SolverConfig> {
        let space = match kv.get("half_width") {
            Some(_) => SpaceGrid::new(kv.num("half_width", 0.0)?, n_x)?,
            None => SpaceGrid::for_problem(nu, t_max, &u0, n_x)?,
        };
        Ok(SolverConfig {
            nu,
            hurst,
            sigma,
            u0,
            time_grid: GridSpec::uniform(t_max, n_t)?,
            space,
            nonlinear: kv.flag("nonlinear", true)?,
            tol,
            noise: None,
        })
    };

    match kv.get("t_max") {
        Some("auto") => {
            let probe = build(0.1)?;
            Ok((build(estimate_t0(&probe)?.t0.min(1.0))?, true))
        }
        Some(_) => Ok((build(kv.num("t_max", 0.0)?)?, false)),
        None => match noise {
            Some(n) => Ok((build(n.grid.t_max)?, false)),
            None => {
                let probe = build(0.1)?;
                Ok((build(estimate_t0(&probe)?.t0.min(1.0))?, true))
            }
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let kv = KeyValues::parse("# header\n\nhurst = 0.8  # trailing\n nu=2\n").unwrap();
        assert_eq!(kv.get("hurst"), Some("0.8"));
        assert_eq!(kv.get("nu"), Some("2"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(KeyValues::parse("hurst 0.8").is_err());
        assert!(KeyValues::parse("colour = red").is_err());
        assert!(KeyValues::parse("nu = 1\nnu = 2").is_err());
        assert!(KeyValues::parse("nu =").is_err());
    }

    #[test]
    fn builds_deterministic_config() {
        let kv = KeyValues::parse("sigma = zero\nt_max = 0.2\nn_t = 17\nn_x = 33\nu0 = tent").unwrap();
        let (cfg, estimated) = solver_config(&kv, None).unwrap();
        assert!(!estimated);
        assert!(cfg.sigma.is_zero());
        assert_eq!(cfg.time_grid.n_points, 17);
        assert_eq!(cfg.space.n_x, 33);
        cfg.validate().unwrap();
        let bad = KeyValues::parse("hurst = 0.4").unwrap();
        assert!(solver_config(&bad, None).is_err());
        let bad = KeyValues::parse("nonlinear = maybe\nt_max = 0.1").unwrap();
        assert!(solver_config(&bad, None).is_err());
    }

    proptest::proptest! {
        #[test]
        fn parse_round_trips_numeric_keys(
            hurst in 0.51f64..0.99,
            nu in 0.01f64..10.0,
            n_t in 2usize..500,
            pad in "[ \t]{0,3}",
        ) {
            let text = format!("hurst{pad}={pad}{hurst}\n# note\nnu = {nu}{pad}\nn_t={n_t}\n");
            let kv = KeyValues::parse(&text).unwrap();
            proptest::prop_assert_eq!(kv.get("hurst").unwrap().parse::<f64>().unwrap(), hurst);
            proptest::prop_assert_eq!(kv.get("nu").unwrap().parse::<f64>().unwrap(), nu);
            proptest::prop_assert_eq!(kv.get("n_t").unwrap().parse::<usize>().unwrap(), n_t);
        }

        #[test]
        fn unknown_keys_rejected(key in "[a-z]{3,10}") {
            proptest::prop_assume!(!KEYS.contains(&key.as_str()));
            let text = format!("{} = 1", key);
            proptest::prop_assert!(KeyValues::parse(&text).is_err());
        }
    }
}
