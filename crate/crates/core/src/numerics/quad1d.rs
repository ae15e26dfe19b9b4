//! One-dimensional quadrature: globally adaptive Gauss-Kronrod and fixed
//! geometrically graded Gauss rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::gauss::{graded_rule, Grading, Resolution};
use super::grid::QuadTolerance;
use super::summation::NeumaierSum;
use crate::error::{Error, Result};

/// A quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive 15-point Gauss-Kronrod quadrature of `f` over [a, b].
///
/// The interval with the largest error estimate is bisected until the summed
/// error falls below the tolerance. Endpoint nodes are never evaluated, so
/// integrable endpoint singularities are allowed.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: QuadTolerance) -> Result<QuadResult> {
    if !(a < b) {
        if a == b {
            return Ok(QuadResult { value: 0.0, error: 0.0 });
        }
        return Err(Error::domain(format!("integrate_1d needs a < b, got [{a}, {b}]")));
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut subdivisions = 0;
    loop {
        let mut total = NeumaierSum::new();
        let mut err = 0.0;
        for s in heap.iter() {
            total.add(s.value);
            err += s.error;
        }
        let value = total.value();
        if !value.is_finite() {
            return Err(Error::Accuracy { what: "integrate_1d produced a non-finite value".into(), best: value, error: f64::INFINITY });
        }
        if err <= tol.target(value) {
            return Ok(QuadResult { value, error: err });
        }
        if subdivisions >= tol.max_subdivisions {
            return Err(Error::Accuracy {
                what: format!("integrate_1d exceeded {} subdivisions", tol.max_subdivisions),
                best: value,
                error: err,
            });
        }
        let worst = heap.pop().expect("heap never empty");
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            return Err(Error::Accuracy {
                what: "integrate_1d reached machine resolution".into(),
                best: value,
                error: err,
            });
        }
        let (v1, e1) = gk15(&f, worst.a, m);
        let (v2, e2) = gk15(&f, m, worst.b);
        heap.push(Segment { a: worst.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: worst.b, value: v2, error: e2 });
        subdivisions += 1;
    }
}

/// Fixed composite Gauss rule on [a, b] with geometric refinement toward the
/// graded end(s). Cheap and smooth in its parameters; callers estimate the
/// error by comparing two resolutions.
pub fn integrate_graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, grading: Grading, res: Resolution) -> f64 {
    if a == b {
        return 0.0;
    }
    let rule = graded_rule(grading, res);
    let mut s = NeumaierSum::new();
    for (x, w) in rule.mapped(a, b) {
        s.add(w * f(x));
    }
    s.value()
}

/// Power-law behaviour of an integrand at the ends of [lo, hi]: the integrand
/// contains a factor (s - lo)^lo and (hi - s)^hi (exponents > -1, 0 = none).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EndPowers {
    pub lo: f64,
    pub hi: f64,
}

impl EndPowers {
    pub const NONE: EndPowers = EndPowers { lo: 0.0, hi: 0.0 };

    pub fn at_lo(alpha: f64) -> Self {
        Self { lo: alpha, hi: 0.0 }
    }

    pub fn at_hi(alpha: f64) -> Self {
        Self { lo: 0.0, hi: alpha }
    }
}

// Distances d in [0, len] from a singular end and their weights. With a
// negative exponent alpha the map d = len xi^{1/(1+alpha)} cancels d^alpha dd,
// so the graded rule in xi only sees the remaining factors.
fn end_nodes(len: f64, alpha: f64, far_singular: bool, res: Resolution) -> Vec<(f64, f64)> {
    let grading = if far_singular { Grading::Both } else { Grading::Left };
    let rule = graded_rule(grading, res);
    if alpha < 0.0 {
        let q = 1.0 / (1.0 + alpha);
        rule.mapped(0.0, 1.0)
            .map(|(xi, w)| (len * xi.powf(q), w * len * q * xi.powf(q - 1.0)))
            .collect()
    } else {
        rule.mapped(0.0, len).collect()
    }
}

/// ∫_lo^hi phi over the cells cut by `breaks`, where phi is smooth inside each
/// cell apart from the declared end powers and integrable singularities at the
/// `singular` break points. The integrand receives `(s, s - lo, hi - s)`; in
/// the first and last cells the distances are exact rather than differences
/// of nearby floats, so kernels such as (hi - s)^{-H} keep full relative
/// accuracy up to the endpoint.
pub fn integrate_cells<F>(
    phi: F,
    breaks: &[f64],
    singular: &[f64],
    lo: f64,
    hi: f64,
    ends: EndPowers,
    res: Resolution,
) -> f64
where
    F: Fn(f64, f64, f64) -> f64,
{
    if !(hi > lo) {
        return 0.0;
    }
    let slack = 1e-13 * (hi - lo).max(hi.abs()).max(lo.abs());
    let mut pts = Vec::with_capacity(breaks.len() + 2);
    pts.push(lo);
    pts.extend(breaks.iter().copied().filter(|&b| b > lo + slack && b < hi - slack));
    pts.push(hi);
    let is_sing = |x: f64| singular.iter().any(|&p| (p - x).abs() <= slack);
    let n = pts.len() - 1;
    let mut acc = NeumaierSum::new();
    if n == 1 {
        // a single cell with possible powers at both ends: split in the middle
        let mid = 0.5 * (lo + hi);
        let half = mid - lo;
        for (d, w) in end_nodes(half, ends.lo, false, res) {
            let s = lo + d;
            acc.add(w * phi(s, d, hi - s));
        }
        for (d, w) in end_nodes(hi - mid, ends.hi, false, res) {
            let s = hi - d;
            acc.add(w * phi(s, s - lo, d));
        }
        return acc.value();
    }
    for c in 0..n {
        let (a, b) = (pts[c], pts[c + 1]);
        let (sa, sb) = (is_sing(a), is_sing(b));
        let len = b - a;
        if c == n - 1 {
            for (d, w) in end_nodes(len, ends.hi, sa, res) {
                let s = hi - d;
                acc.add(w * phi(s, s - lo, d));
            }
        } else if c == 0 {
            for (d, w) in end_nodes(len, ends.lo, sb, res) {
                let s = lo + d;
                acc.add(w * phi(s, d, hi - s));
            }
        } else {
            let g = match (sa, sb) {
                (true, true) => Grading::Both,
                (true, false) => Grading::Left,
                (false, true) => Grading::Right,
                (false, false) => Grading::None,
            };
            let rule = graded_rule(g, res);
            for (s, w) in rule.mapped(a, b) {
                acc.add(w * phi(s, s - lo, hi - s));
            }
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_and_power_rule() {
        let tol = QuadTolerance::default();
        let r = integrate_1d(|_| 1.0, 0.0, 1.0, tol).unwrap();
        assert_relative_eq!(r.value, 1.0, max_relative = 1e-14);
        let r = integrate_1d(|x: f64| x.powf(-0.4), 0.0, 1.0, tol).unwrap();
        assert_relative_eq!(r.value, 1.0 / 0.6, max_relative = 1e-8);
        assert!(r.error <= 1e-8 * r.value);
    }

    #[test]
    fn cells_keep_endpoint_accuracy() {
        // ∫_0^1 (1 - s)^{-0.9} ds = 10, with breaks inside
        let res = Resolution::new(6, 10);
        let v = integrate_cells(|_, _, d| d.powf(-0.9), &[0.3, 0.7], &[], 0.0, 1.0, EndPowers::at_hi(-0.9), res);
        assert_relative_eq!(v, 10.0, max_relative = 1e-12);
        let v = integrate_cells(|_, d, _| d.powf(-0.5) * (1.0 + d).ln(), &[], &[], 0.0, 1.0, EndPowers::at_lo(-0.5), res);
        let exact = 2.0 * 2f64.ln() - 4.0 + std::f64::consts::PI;
        assert_relative_eq!(v, exact, max_relative = 1e-11);
        // (s (1 - s))^{-1/2} on one cell: Beta(1/2, 1/2) = pi
        let ends = EndPowers { lo: -0.5, hi: -0.5 };
        let v = integrate_cells(|_, a, b| (a * b).powf(-0.5), &[], &[], 0.0, 1.0, ends, res);
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-11);
    }

    #[test]
    fn reversed_interval_is_domain_error() {
        assert!(integrate_1d(|x| x, 1.0, 0.0, QuadTolerance::default()).is_err());
    }

    #[test]
    fn cap_reports_best_estimate() {
        let tol = QuadTolerance::new(1e-15, 1e-300, 3).unwrap();
        match integrate_1d(|x: f64| x.powf(-0.9), 0.0, 1.0, tol) {
            Err(Error::Accuracy { best, .. }) => assert!(best > 0.0),
            other => panic!("expected accuracy error, got {other:?}"),
        }
    }
}
