//! Default settings for the 1D cosine benchmark.
//!
//! The 1D setup fixes the domain `[0, 1]`, the initial state
//! `u0 = (cos πx + 1) / 2` and the starting dose, but not the model
//! parameters. The values of `RHO`, `DIFFUSION`, `FINAL_TIME` and `N_STEPS`
//! below are this crate's choices.

use std::f64::consts::PI;

use crate::dynamics::{ModelParams, Problem, TimeGrid};
use crate::error::Result;
use crate::fem::{DiffusionField, FeField};
use crate::mesh::build_interval_mesh;

pub const RHO: f64 = 0.5;
pub const DIFFUSION: f64 = 0.1;
pub const FINAL_TIME: f64 = 10.0;
pub const N_STEPS: usize = 1000;
pub const N_ELEMENTS: usize = 160;

/// `(cos πx + 1) / 2`.
pub fn cosine_profile(x: f64) -> f64 {
    0.5 * ((PI * x).cos() + 1.0)
}

/// The 1D benchmark on `[0, 1]` with cosine initial state.
pub fn cosine_benchmark(
    n_elements: usize,
    rho: f64,
    diffusion: f64,
    final_time: f64,
    n_steps: usize,
) -> Result<Problem> {
    let mesh = build_interval_mesh(n_elements, 0.0, 1.0)?;
    // clamp guards the endpoints against cos(π) rounding just below -1
    let u0 = FeField::interpolate(&mesh, |p| cosine_profile(p[0]).clamp(0.0, 1.0))?;
    let params = ModelParams::new(rho, DiffusionField::uniform(diffusion)?)?;
    Problem::new(mesh, params, TimeGrid::new(final_time, n_steps)?, u0)
}

/// [`cosine_benchmark`] with the default parameters.
pub fn default_benchmark() -> Result<Problem> {
    cosine_benchmark(N_ELEMENTS, RHO, DIFFUSION, FINAL_TIME, N_STEPS)
}
