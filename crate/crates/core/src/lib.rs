//! Numerical toolkit for the stochastic Burgers equation driven by
//! multiplicative Rosenblatt noise.

pub mod error;
pub mod heat_kernel;
pub mod numerics;
pub mod rkhs;
pub mod rosenblatt;
pub mod solver;
pub mod regularity;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use special::HurstParameter;
