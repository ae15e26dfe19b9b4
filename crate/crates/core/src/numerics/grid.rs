use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time grid on [0, t_max]. With `grading_exponent` q the nodes are
/// t_max (i/(n-1))^q, concentrating points near t = 0; q = 1 is uniform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub n_points: usize,
    pub grading_exponent: f64,
}

impl GridSpec {
    pub fn new(t_max: f64, n_points: usize, grading_exponent: f64) -> Result<Self> {
        let g = Self { t_max, n_points, grading_exponent };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(t_max: f64, n_points: usize) -> Result<Self> {
        Self::new(t_max, n_points, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::config(format!("grid t_max must be positive, got {}", self.t_max)));
        }
        if self.n_points < 2 {
            return Err(Error::config(format!(
                "grid needs at least 2 points, got {}",
                self.n_points
            )));
        }
        if !(self.grading_exponent >= 1.0) || !self.grading_exponent.is_finite() {
            return Err(Error::config(format!(
                "grading exponent must be >= 1, got {}",
                self.grading_exponent
            )));
        }
        Ok(())
    }

    pub fn is_uniform(&self) -> bool {
        self.grading_exponent == 1.0
    }

    pub fn node(&self, i: usize) -> f64 {
        let last = self.n_points - 1;
        if i == 0 {
            return 0.0;
        }
        if i >= last {
            return self.t_max;
        }
        let xi = i as f64 / last as f64;
        if self.is_uniform() {
            self.t_max * xi
        } else {
            self.t_max * xi.powf(self.grading_exponent)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Index of the node equal to `t` up to a relative 1e-9 slack.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let slack = 1e-9 * self.t_max;
        let nodes = self.nodes();
        let pos = nodes.partition_point(|&x| x < t - slack);
        (pos < nodes.len() && (nodes[pos] - t).abs() <= slack).then_some(pos)
    }
}

/// Tolerance bundle for the adaptive quadrature routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadTolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadTolerance {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-12, max_subdivisions: 2000 }
    }
}

impl QuadTolerance {
    pub fn new(rel_tol: f64, abs_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || !(abs_tol > 0.0) || max_subdivisions < 1 {
            return Err(Error::config(format!(
                "invalid tolerance (rel {rel_tol}, abs {abs_tol}, max_subdivisions {max_subdivisions})"
            )));
        }
        Ok(Self { rel_tol, abs_tol, max_subdivisions })
    }

    pub fn with_rel(self, rel_tol: f64) -> Self {
        Self { rel_tol, ..self }
    }

    #[inline]
    pub fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_grid_endpoints_and_monotone() {
        let g = GridSpec::new(2.0, 33, 3.0).unwrap();
        let nodes = g.nodes();
        assert_eq!(nodes[0], 0.0);
        assert_eq!(nodes[32], 2.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.index_of(2.0), Some(32));
        assert_eq!(g.index_of(0.3), None);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(0.0, 4, 1.0).is_err());
        assert!(GridSpec::new(1.0, 1, 1.0).is_err());
        assert!(GridSpec::new(1.0, 4, 0.5).is_err());
        assert!(QuadTolerance::new(0.0, 1e-12, 10).is_err());
    }
}
