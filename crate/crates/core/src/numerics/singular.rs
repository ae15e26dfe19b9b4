//! Double integrals against the weight |r - s|^{2H-2}.
//!
//! The square is split into blocks along a partition. Diagonal blocks are
//! written in the coordinates (s, w = r - s) and the substitution
//! w = L xi^{1/(2H-1)} turns w^{2H-2} dw into a constant, so the remaining
//! integrand is bounded. Blocks sharing a corner are split into two Duffy
//! triangles, and well-separated blocks use tensor Gauss rules. Blocks whose
//! gap is small compared to their size are bisected first.

use rayon::prelude::*;

use super::gauss::{graded_rule, Grading, Resolution};
use super::grid::QuadTolerance;
use super::quad1d::QuadResult;
use super::summation::NeumaierSum;
use crate::error::{Error, Result};
use crate::special::HurstParameter;

/// Resolution ladder used by the adaptive drivers.
const LADDER: [Resolution; 5] = [
    Resolution::new(3, 6),
    Resolution::new(5, 8),
    Resolution::new(8, 12),
    Resolution::new(12, 16),
    Resolution::new(16, 20),
];

/// Fraction kept at each step when peeling diagonal blocks toward a corner.
const CORNER_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy)]
struct Cell {
    a: f64,
    b: f64,
    // the integrand may be singular at the left / right end
    sl: bool,
    sr: bool,
}

impl Cell {
    fn len(&self) -> f64 {
        self.b - self.a
    }

    fn grading(&self) -> Grading {
        match (self.sl, self.sr) {
            (false, false) => Grading::None,
            (true, false) => Grading::Left,
            (false, true) => Grading::Right,
            (true, true) => Grading::Both,
        }
    }

    fn split_at(&self, m: f64) -> (Cell, Cell) {
        (
            Cell { a: self.a, b: m, sl: self.sl, sr: false },
            Cell { a: m, b: self.b, sl: false, sr: self.sr },
        )
    }
}

struct Engine<'k, K> {
    // k(r, s) with r < s
    k: &'k K,
    e: f64, // 2H - 1
    res: Resolution,
}

impl<K: Fn(f64, f64) -> f64 + Sync> Engine<'_, K> {
    // A node can round onto a singular edge; that single point carries no
    // mass and is dropped.
    #[inline]
    fn k(&self, r: f64, s: f64) -> f64 {
        let v = (self.k)(r, s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    }

    /// Diagonal block, first peeling off geometrically shrinking sub-blocks
    /// toward singular corners so that the remaining corner block is
    /// negligible.
    fn diagonal(&self, c: Cell) -> f64 {
        let mut acc = NeumaierSum::new();
        let mut cur = c;
        let floor_left = 1e-30 * c.len() + 1e-15 * c.a.abs();
        while cur.sl && cur.len() > floor_left {
            let m = cur.a + CORNER_RATIO * cur.len();
            let (inner, outer) = cur.split_at(m);
            acc.add(self.pair(inner, outer));
            acc.add(self.diagonal(outer));
            cur = inner;
        }
        let floor_right = 1e-30 * c.len() + 1e-15 * c.b.abs();
        while cur.sr && cur.len() > floor_right {
            let m = cur.b - CORNER_RATIO * cur.len();
            let (outer, inner) = cur.split_at(m);
            acc.add(self.pair(outer, inner));
            acc.add(self.diagonal_block(outer));
            cur = inner;
        }
        acc.add(self.diagonal_block(cur));
        acc.value()
    }

    fn diagonal_block(&self, c: Cell) -> f64 {
        let l = c.len();
        let p = 1.0 / self.e;
        let any = c.sl || c.sr;
        let outer = graded_rule(if any { Grading::Both } else { Grading::Left }, self.res);
        let inner = graded_rule(if any { Grading::Both } else { Grading::None }, self.res);
        let mut acc = NeumaierSum::new();
        for (xi, wx) in outer.mapped(0.0, 1.0) {
            let w = l * xi.powf(p);
            let hi = c.b - w;
            if !(hi > c.a) {
                continue;
            }
            let mut f = 0.0;
            for (s, ws) in inner.mapped(c.a, hi) {
                f += ws * self.k(s, s + w);
            }
            acc.add(wx * f);
        }
        p * l.powf(self.e) * acc.value()
    }

    fn tensor(&self, i: Cell, j: Cell) -> f64 {
        let rx = graded_rule(i.grading(), self.res);
        let ry = graded_rule(j.grading(), self.res);
        let wgt = self.e - 1.0; // 2H - 2
        let mut acc = NeumaierSum::new();
        for (r, wr) in rx.mapped(i.a, i.b) {
            let mut row = 0.0;
            for (s, ws) in ry.mapped(j.a, j.b) {
                row += ws * (s - r).powf(wgt) * self.k(r, s);
            }
            acc.add(wr * row);
        }
        acc.value()
    }

    fn duffy(&self, i: Cell, j: Cell) -> f64 {
        // r = b - x, s = b + y with the weight (x + y)^{2H-2}
        let b = i.b;
        let (xl, yl) = (i.len(), j.len());
        let wexp = self.e - 1.0;
        let any = i.sl || i.sr || j.sl || j.sr;
        let radial = graded_rule(if any { Grading::Both } else { Grading::Left }, self.res);
        let angular = graded_rule(if any { Grading::Both } else { Grading::None }, self.res);
        let mut acc = NeumaierSum::new();
        for (x, wx) in radial.mapped(0.0, xl) {
            let mut row = 0.0;
            for (u, wu) in angular.mapped(0.0, 1.0) {
                let q = yl * u / xl;
                row += wu * (1.0 + q).powf(wexp) * self.k(b - x, b + x * q);
            }
            acc.add(wx * x.powf(self.e) * (yl / xl) * row);
        }
        for (y, wy) in radial.mapped(0.0, yl) {
            let mut row = 0.0;
            for (v, wv) in angular.mapped(0.0, 1.0) {
                let q = xl * v / yl;
                row += wv * (1.0 + q).powf(wexp) * self.k(b - y * q, b + y);
            }
            acc.add(wy * y.powf(self.e) * (xl / yl) * row);
        }
        acc.value()
    }

    /// Block with `i` entirely to the left of `j`.
    fn pair(&self, i: Cell, j: Cell) -> f64 {
        let (xl, yl) = (i.len(), j.len());
        let gap = j.a - i.b;
        if gap <= 0.0 {
            // keep far-end singularities out of the Duffy triangles, whose
            // radial rule reaches them only through the capped right grading
            if i.sl {
                let (i1, i2) = i.split_at(0.5 * (i.a + i.b));
                return self.pair(i1, j) + self.pair(i2, j);
            }
            if j.sr {
                let (j1, j2) = j.split_at(0.5 * (j.a + j.b));
                return self.pair(i, j1) + self.pair(i, j2);
            }
            if yl > 2.0 * xl {
                let (j1, j2) = j.split_at(j.a + xl);
                return self.pair(i, j1) + self.pair(i, j2);
            }
            if xl > 2.0 * yl {
                let (i1, i2) = i.split_at(i.b - yl);
                return self.pair(i1, j) + self.pair(i2, j);
            }
            return self.duffy(i, j);
        }
        if gap >= xl.max(yl) {
            return self.tensor(i, j);
        }
        if xl >= yl {
            let (i1, i2) = i.split_at(0.5 * (i.a + i.b));
            self.pair(i1, j) + self.pair(i2, j)
        } else {
            let (j1, j2) = j.split_at(0.5 * (j.a + j.b));
            self.pair(i, j1) + self.pair(i, j2)
        }
    }
}

fn cells(breaks: &[f64], singular_points: &[f64]) -> Result<Vec<Cell>> {
    if breaks.len() < 2 {
        return Err(Error::Shape("partition needs at least two break points".into()));
    }
    if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.iter().any(|x| !x.is_finite()) {
        return Err(Error::Shape("partition must be finite and strictly increasing".into()));
    }
    let scale = breaks[breaks.len() - 1] - breaks[0];
    let near = |x: f64| singular_points.iter().any(|&p| (p - x).abs() <= 1e-12 * scale);
    Ok(breaks
        .windows(2)
        .map(|w| Cell { a: w[0], b: w[1], sl: near(w[0]), sr: near(w[1]) })
        .collect())
}

/// Sum over all blocks r < s of the partition at a fixed resolution, with
/// `k(r, s)` the integrand on the upper triangle.
fn upper_triangle_sum<K>(k: &K, h: HurstParameter, cells: &[Cell], res: Resolution) -> f64
where
    K: Fn(f64, f64) -> f64 + Sync,
{
    let eng = Engine { k, e: 2.0 * h.value() - 1.0, res };
    let n = cells.len();
    let parts: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = NeumaierSum::new();
            row.add(eng.diagonal(cells[i]));
            for j in i + 1..n {
                row.add(eng.pair(cells[i], cells[j]));
            }
            row.value()
        })
        .collect();
    let mut total = NeumaierSum::new();
    total.extend(parts);
    total.value()
}

fn adaptive<K>(k: &K, h: HurstParameter, cells: &[Cell], tol: QuadTolerance, what: &str) -> Result<QuadResult>
where
    K: Fn(f64, f64) -> f64 + Sync,
{
    let mut prev = upper_triangle_sum(k, h, cells, LADDER[0]);
    let mut err = f64::INFINITY;
    for res in &LADDER[1..] {
        let cur = upper_triangle_sum(k, h, cells, *res);
        if !cur.is_finite() {
            return Err(Error::Accuracy { what: format!("{what}: non-finite value"), best: cur, error: f64::INFINITY });
        }
        err = (cur - prev).abs();
        if err <= tol.target(cur) {
            return Ok(QuadResult { value: cur, error: err });
        }
        prev = cur;
    }
    Err(Error::Accuracy { what: format!("{what}: resolution ladder exhausted"), best: prev, error: err })
}

/// ∬_{[a,b]^2} g(r,s) |r-s|^{2H-2} dr ds, allowing integrable singularities of
/// g on the edges of the square.
pub fn integrate_singular_double<G>(g: G, h: HurstParameter, a: f64, b: f64, tol: QuadTolerance) -> Result<QuadResult>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    integrate_singular_partitioned(g, h, &[a, b], &[a, b], tol)
}

/// Same integral restricted to the half-domain r < s.
pub fn integrate_singular_half<G>(g: G, h: HurstParameter, a: f64, b: f64, tol: QuadTolerance) -> Result<QuadResult>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    if !(a < b) {
        return Err(Error::domain(format!("empty domain [{a}, {b}]")));
    }
    let cells = cells(&[a, b], &[a, b])?;
    adaptive(&g, h, &cells, tol, "integrate_singular_half")
}

/// ∬ g(r,s) |r-s|^{2H-2} over the square spanned by `breaks`, where g is
/// smooth inside every cell of the partition except for integrable
/// singularities at the listed `singular_points` (which should be breaks).
pub fn integrate_singular_partitioned<G>(
    g: G,
    h: HurstParameter,
    breaks: &[f64],
    singular_points: &[f64],
    tol: QuadTolerance,
) -> Result<QuadResult>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let cells = cells(breaks, singular_points)?;
    let sym = |r: f64, s: f64| g(r, s) + g(s, r);
    adaptive(&sym, h, &cells, tol, "integrate_singular_double")
}

/// Single evaluation at a fixed resolution, no error control.
pub fn singular_partitioned_fixed<G>(
    g: G,
    h: HurstParameter,
    breaks: &[f64],
    singular_points: &[f64],
    res: Resolution,
) -> Result<f64>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let cells = cells(breaks, singular_points)?;
    let sym = |r: f64, s: f64| g(r, s) + g(s, r);
    Ok(upper_triangle_sum(&sym, h, &cells, res))
}
