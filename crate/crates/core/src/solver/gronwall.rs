use crate::error::{Error, Result};
use crate::numerics::GridSpec;
use crate::special::{gamma_fn, mittag_leffler};

/// a · E_β(b Γ(β) t^β), the majorant of any f with
/// f(t) ≤ a + b ∫_0^t (t−s)^{β−1} f(s) ds.
pub fn gronwall_bound(a: f64, b: f64, beta: f64, t: f64) -> Result<f64> {
    if !(a >= 0.0) || !(b >= 0.0) || !(beta > 0.0) || !(t >= 0.0) {
        return Err(Error::domain(format!(
            "gronwall_bound needs a, b, t >= 0 and beta > 0, got a={a}, b={b}, beta={beta}, t={t}"
        )));
    }
    if a == 0.0 {
        return Ok(0.0);
    }
    Ok(a * mittag_leffler(beta, b * gamma_fn(beta)? * t.powf(beta))?)
}

/// Iterates f₀ = a, f_{n+1}(t) = a + b ∫_0^t (t−s)^{β−1} f_n(s) ds on the
/// grid nodes. Each step of the integral uses the left value of f_n with the
/// exact weight of (t−s)^{β−1}, which never overestimates an increasing f_n.
pub fn gronwall_iterates(a: f64, b: f64, beta: f64, grid: &GridSpec, n_iters: usize) -> Result<Vec<Vec<f64>>> {
    gronwall_bound(a, b, beta, 0.0)?;
    grid.validate()?;
    let t = grid.nodes();
    let n = t.len();
    let mut out = vec![vec![a; n]];
    for _ in 0..n_iters {
        let prev = out.last().unwrap();
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let integral: f64 = (0..i)
                    .map(|k| {
                        let w = ((t[i] - t[k]).powf(beta) - (t[i] - t[k + 1]).powf(beta)) / beta;
                        w * prev[k]
                    })
                    .sum();
                a + b * integral
            })
            .collect();
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        assert_eq!(gronwall_bound(0.0, 3.0, 0.5, 1.0).unwrap(), 0.0);
        assert!((gronwall_bound(2.0, 0.0, 0.5, 1.0).unwrap() - 2.0).abs() < 1e-15);
        let v = gronwall_bound(1.5, 0.7, 1.0, 2.0).unwrap();
        assert!((v - 1.5 * (1.4f64).exp()).abs() < 1e-12 * v);
        assert!(gronwall_bound(-1.0, 0.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn iterates_increase_towards_bound() {
        let grid = GridSpec::uniform(1.0, 65).unwrap();
        let it = gronwall_iterates(1.0, 1.2, 0.6, &grid, 40).unwrap();
        let last = it.last().unwrap();
        for (i, &t) in grid.nodes().iter().enumerate() {
            let bound = gronwall_bound(1.0, 1.2, 0.6, t).unwrap();
            assert!(last[i] <= bound * (1.0 + 1e-12));
            assert!(it[1][i] >= it[0][i]);
        }
        // the limit is close to the bound, not merely below it
        let bound = gronwall_bound(1.0, 1.2, 0.6, 1.0).unwrap();
        assert!(last[64] > 0.8 * bound);
    }
}
