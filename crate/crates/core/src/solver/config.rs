use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat_kernel::{spatial_half_width, Viscosity};
use crate::numerics::{GridSpec, QuadTolerance};
use crate::rosenblatt::PathEnsemble;
use crate::special::HurstParameter;

/// Noise coefficient σ, restricted to families with known C_b² bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaSpec {
    Constant { c: f64 },
    /// amplitude · cos(frequency · u)
    Cosine { amplitude: f64, frequency: f64 },
    /// amplitude · tanh(slope · u)
    Tanh { amplitude: f64, slope: f64 },
}

/// sup |σ|, sup |σ'|, sup |σ''|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub sup: f64,
    pub lip: f64,
    pub second: f64,
}

impl SigmaSpec {
    pub fn preset() -> Self {
        SigmaSpec::Cosine { amplitude: 0.5, frequency: 1.0 }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SigmaSpec::Constant { c } => c,
            SigmaSpec::Cosine { amplitude, frequency } => amplitude * (frequency * u).cos(),
            SigmaSpec::Tanh { amplitude, slope } => amplitude * (slope * u).tanh(),
        }
    }

    pub fn bounds(&self) -> SigmaBounds {
        match *self {
            SigmaSpec::Constant { c } => SigmaBounds { sup: c.abs(), lip: 0.0, second: 0.0 },
            SigmaSpec::Cosine { amplitude, frequency } => {
                let a = amplitude.abs();
                let k = frequency.abs();
                SigmaBounds { sup: a, lip: a * k, second: a * k * k }
            }
            SigmaSpec::Tanh { amplitude, slope } => {
                let a = amplitude.abs();
                let k = slope.abs();
                // max |tanh''| = 4/(3√3)
                SigmaBounds { sup: a, lip: a * k, second: a * k * k * 4.0 / (3.0 * 3f64.sqrt()) }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            SigmaSpec::Constant { c } => c == 0.0,
            SigmaSpec::Cosine { amplitude, .. } | SigmaSpec::Tanh { amplitude, .. } => {
                amplitude == 0.0
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let b = self.bounds();
        if [b.sup, b.lip, b.second].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("sigma {self:?} has non-finite bounds")))
        }
    }
}

/// Bounded initial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Constant { value: f64 },
    /// amplitude · exp(−(x − center)² / (2 width²))
    GaussianBump { amplitude: f64, center: f64, width: f64 },
    /// amplitude · max(0, 1 − |x − center| / half_width), a profile with kinks
    Tent { amplitude: f64, center: f64, half_width: f64 },
}

impl InitialCondition {
    pub fn preset() -> Self {
        InitialCondition::GaussianBump { amplitude: 1.0, center: 0.0, width: 1.0 }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Constant { value } => value,
            InitialCondition::GaussianBump { amplitude, center, width } => {
                let z = (x - center) / width;
                amplitude * (-0.5 * z * z).exp()
            }
            InitialCondition::Tent { amplitude, center, half_width } => {
                amplitude * (1.0 - (x - center).abs() / half_width).max(0.0)
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            InitialCondition::Constant { value } => value.abs(),
            InitialCondition::GaussianBump { amplitude, .. }
            | InitialCondition::Tent { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Radius around the origin outside of which the profile is constant to
    /// double precision.
    pub fn support_radius(&self) -> f64 {
        match *self {
            InitialCondition::Constant { .. } => 0.0,
            InitialCondition::GaussianBump { center, width, .. } => {
                center.abs() + width.abs() * (2.0 * 37.0f64).sqrt()
            }
            InitialCondition::Tent { center, half_width, .. } => center.abs() + half_width.abs(),
        }
    }

    /// Same shape with the amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            InitialCondition::Constant { value } => InitialCondition::Constant { value: value * factor },
            InitialCondition::GaussianBump { amplitude, center, width } => {
                InitialCondition::GaussianBump { amplitude: amplitude * factor, center, width }
            }
            InitialCondition::Tent { amplitude, center, half_width } => {
                InitialCondition::Tent { amplitude: amplitude * factor, center, half_width }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialCondition::Constant { value } => value.is_finite(),
            InitialCondition::GaussianBump { amplitude, center, width } => {
                amplitude.is_finite() && center.is_finite() && width > 0.0 && width.is_finite()
            }
            InitialCondition::Tent { amplitude, center, half_width } => {
                amplitude.is_finite() && center.is_finite() && half_width > 0.0 && half_width.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("initial condition {self:?} is not a bounded profile")))
        }
    }
}

/// Uniform grid of `n_x` points on [−half_width, half_width].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub half_width: f64,
    pub n_x: usize,
}

impl SpaceGrid {
    pub fn new(half_width: f64, n_x: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() || n_x < 3 {
            return Err(Error::config(format!(
                "space grid needs half_width > 0 and n_x >= 3, got {half_width}, {n_x}"
            )));
        }
        Ok(Self { half_width, n_x })
    }

    /// Domain wide enough for heat flow up to `t_max` plus the support of u0.
    pub fn for_problem(nu: Viscosity, t_max: f64, u0: &InitialCondition, n_x: usize) -> Result<Self> {
        Self::new(spatial_half_width(nu, t_max) + u0.support_radius(), n_x)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.n_x - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let j = ((x + self.half_width) / self.dx()).round();
        j.clamp(0.0, (self.n_x - 1) as f64) as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: Viscosity,
    pub hurst: HurstParameter,
    pub sigma: SigmaSpec,
    pub u0: InitialCondition,
    pub time_grid: GridSpec,
    pub space: SpaceGrid,
    /// Include the Burgers term; switching it off leaves the linear
    /// (heat plus noise) equation.
    pub nonlinear: bool,
    pub tol: QuadTolerance,
    #[serde(skip)]
    pub noise: Option<Arc<PathEnsemble>>,
}

impl SolverConfig {
    /// H = 0.75, ν = 1, unit Gaussian bump, σ = 0.5 cos u, 256 space points,
    /// 128 time points on [0, t_max].
    pub fn preset(t_max: f64) -> Result<Self> {
        let nu = Viscosity::new(1.0)?;
        let u0 = InitialCondition::preset();
        Ok(Self {
            nu,
            hurst: HurstParameter::new(0.75)?,
            sigma: SigmaSpec::preset(),
            u0,
            time_grid: GridSpec::uniform(t_max, 128)?,
            space: SpaceGrid::for_problem(nu, t_max, &u0, 256)?,
            nonlinear: true,
            tol: QuadTolerance::default(),
            noise: None,
        })
    }

    pub fn with_noise(mut self, noise: Arc<PathEnsemble>) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.time_grid.validate()?;
        if !self.time_grid.is_uniform() {
            return Err(Error::config("the solver needs a uniform time grid"));
        }
        self.sigma.validate()?;
        self.u0.validate()?;
        SpaceGrid::new(self.space.half_width, self.space.n_x)?;
        if let Some(noise) = &self.noise {
            let g = noise.grid;
            let tg = self.time_grid;
            let same = g.n_points == tg.n_points
                && (g.t_max - tg.t_max).abs() <= 1e-12 * tg.t_max
                && g.grading_exponent == tg.grading_exponent;
            if !same {
                return Err(Error::Shape(format!(
                    "noise grid (T = {}, {} points) does not match the time grid (T = {}, {} points)",
                    g.t_max, g.n_points, tg.t_max, tg.n_points
                )));
            }
        } else if !self.sigma.is_zero() {
            return Err(Error::config("a noise ensemble is required when sigma is not identically zero"));
        }
        Ok(())
    }

    /// Number of independent realizations the solver will produce.
    pub fn n_paths(&self) -> usize {
        match (&self.noise, self.sigma.is_zero()) {
            (Some(n), false) => n.n_paths(),
            _ => 1,
        }
    }
}
