//! Discretized mild solution of the stochastic Burgers equation
//! u_t = ν u_xx + ½ (u²)_x + σ(u) Ṙ_t on a truncated line.

mod burgers;
mod config;
mod gronwall;
mod operators;
mod picard;

pub use burgers::burgers_finite_difference;
pub use config::{InitialCondition, SigmaBounds, SigmaSpec, SolverConfig, SpaceGrid};
pub use gronwall::{gronwall_bound, gronwall_iterates};
pub use operators::{linear_term, Discretization};
pub use picard::{
    contraction_ratio, estimate_t0, picard_iterate, ContractionReport, Field, T0Estimate,
};
