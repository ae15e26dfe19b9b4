//! Quadrature, grids and regression helpers shared by every other module.

pub mod fit;
pub mod gauss;
pub mod grid;
pub mod quad1d;
pub mod singular;
pub mod summation;

pub use fit::{loglog_fit, LinearFit};
pub use gauss::{Grading, Resolution};
pub use grid::{GridSpec, QuadTolerance};
pub use quad1d::{integrate_1d, integrate_cells, integrate_graded, EndPowers, QuadResult};
pub use singular::{
    integrate_singular_double, integrate_singular_half, integrate_singular_partitioned,
    singular_partitioned_fixed,
};
pub use summation::{compensated_sum, NeumaierSum};
