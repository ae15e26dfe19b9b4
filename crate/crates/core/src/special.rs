//! Gamma and Beta functions, the Mittag-Leffler function, and the closed-form
//! constants attached to the Rosenblatt process.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::summation::NeumaierSum;

/// Hurst index of the driving noise, restricted to the open interval (1/2, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.5 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!(
                "Hurst parameter must lie in the open interval (1/2, 1), got {value}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// H(2H-1), the prefactor of the covariance density |r-s|^{2H-2}.
    #[inline]
    pub fn alpha_h(self) -> f64 {
        self.0 * (2.0 * self.0 - 1.0)
    }
}

impl TryFrom<f64> for HurstParameter {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<HurstParameter> for f64 {
    fn from(h: HurstParameter) -> f64 {
        h.0
    }
}

impl fmt::Display for HurstParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    // x is the shifted argument (Gamma(x+1) form)
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    acc
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma_unchecked(1.0 - x))
    } else if x > 171.7 {
        f64::INFINITY
    } else {
        let xm = x - 1.0;
        let t = xm + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(xm + 0.5) * (-t).exp() * lanczos_sum(xm)
    }
}

/// Gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("gamma_fn requires x > 0, got {x}")));
    }
    // exact on small integers
    if x == x.floor() && x <= 21.0 {
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return Ok(acc);
    }
    Ok(gamma_unchecked(x))
}

/// Natural log of Gamma for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        return Ok((PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)?);
    }
    let xm = x - 1.0;
    let t = xm + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (xm + 0.5) * t.ln() - t + lanczos_sum(xm).ln())
}

pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "beta_fn requires positive arguments, got ({a}, {b})"
        )));
    }
    if a + b < 140.0 {
        Ok(gamma_fn(a)? * gamma_fn(b)? / gamma_fn(a + b)?)
    } else {
        Ok((ln_gamma(a)? + ln_gamma(b)? - ln_gamma(a + b)?).exp())
    }
}

const ML_MAX_TERMS: usize = 10_000;

/// Mittag-Leffler function E_beta(z) = sum_k z^k / Gamma(beta k + 1), summed
/// until the terms fall below 1e-16 of the partial sum.
///
/// Returns an accuracy error when the series does not settle within the term
/// cap, or when cancellation between alternating terms leaves less than about
/// twelve reliable digits (large negative `z` with small `beta`).
pub fn mittag_leffler(beta: f64, z: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("mittag_leffler requires beta > 0, got {beta}")));
    }
    if !z.is_finite() {
        return Err(Error::domain("mittag_leffler requires finite z"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let ln_abs_z = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = NeumaierSum::new();
    let mut max_term: f64 = 0.0;
    let mut last_term = f64::INFINITY;
    for k in 0..ML_MAX_TERMS {
        let kf = k as f64;
        let ln_mag = kf * ln_abs_z - ln_gamma(beta * kf + 1.0)?;
        let mag = ln_mag.exp();
        if !mag.is_finite() {
            return Err(Error::Accuracy {
                what: format!("E_{beta}({z}) overflows double precision"),
                best: f64::INFINITY,
                error: f64::INFINITY,
            });
        }
        let term = if negative && k % 2 == 1 { -mag } else { mag };
        sum.add(term);
        max_term = max_term.max(mag);
        let partial = sum.value();
        // terms must be decreasing before the stopping rule applies
        if k > 0 && mag < last_term && mag <= 1e-16 * partial.abs().max(f64::MIN_POSITIVE) {
            let rounding = max_term * f64::EPSILON * 4.0;
            if rounding > 1e-12 * partial.abs().max(1.0) {
                return Err(Error::Accuracy {
                    what: format!("cancellation in E_{beta}({z}) series"),
                    best: partial,
                    error: rounding,
                });
            }
            return Ok(partial);
        }
        last_term = mag;
    }
    Err(Error::Accuracy {
        what: format!("E_{beta}({z}) series did not converge in {ML_MAX_TERMS} terms"),
        best: sum.value(),
        error: last_term,
    })
}

/// Normalisation constant of the Rosenblatt kernel,
/// c_H^R = 2H(2H-1) / (4 B(1-H, H/2)^2).
pub fn constant_c_hr(h: HurstParameter) -> f64 {
    memoized("c_hr", h, |h| {
        let hv = h.value();
        let b = beta_fn(1.0 - hv, hv / 2.0).expect("valid H gives positive Beta arguments");
        2.0 * hv * (2.0 * hv - 1.0) / (4.0 * b * b)
    })
}

/// Link constant between the Rosenblatt process and fBm,
/// sqrt((2H-1)/(H+1)) Gamma(1-H/2) Gamma(H/2) / Gamma(1-H).
pub fn constant_c_hbr(h: HurstParameter) -> f64 {
    memoized("c_hbr", h, |h| {
        let hv = h.value();
        let g = |x: f64| gamma_fn(x).expect("positive argument");
        ((2.0 * hv - 1.0) / (hv + 1.0)).sqrt() * g(1.0 - hv / 2.0) * g(hv / 2.0) / g(1.0 - hv)
    })
}

/// Embedding constant (H(2H-1) B(2H-1, H))^{1/2}.
pub fn constant_c_emb(h: HurstParameter) -> f64 {
    memoized("c_emb", h, |h| {
        let hv = h.value();
        let b = beta_fn(2.0 * hv - 1.0, hv).expect("valid H gives positive Beta arguments");
        (hv * (2.0 * hv - 1.0) * b).sqrt()
    })
}

/// c_H = sqrt(H(2H-1)) Gamma(1-H), the prefactor of the fractional-integral
/// norm representation.
pub fn constant_c_h(h: HurstParameter) -> f64 {
    memoized("c_h", h, |h| {
        h.alpha_h().sqrt() * gamma_fn(1.0 - h.value()).expect("1-H > 0")
    })
}

type ConstantCache = Mutex<HashMap<(&'static str, u64), f64>>;

fn memoized(name: &'static str, h: HurstParameter, f: impl FnOnce(HurstParameter) -> f64) -> f64 {
    static CACHE: OnceLock<ConstantCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (name, h.value().to_bits());
    if let Some(v) = cache.lock().expect("constant cache poisoned").get(&key) {
        return *v;
    }
    let v = f(h);
    cache.lock().expect("constant cache poisoned").insert(key, v);
    v
}
