//! Optimal time-dependent dosing for the Fisher reaction-diffusion model.
//!
//! The crate discretizes `u_t = ∇·(D∇u) + ρ(1 − u)u − C(t)u` with no-flux
//! boundaries on P1 finite elements, and finds the dosing schedule `C(t) ≥ 0`
//! minimizing
//!
//! ```text
//! J(C) = ∫₀ᵀ ( ∫_Ω u dx + α C(t)² ) dt
//! ```
//!
//! using the adjoint state to evaluate the optimality residual
//! `2αC + ∫_Ω u w dx`.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod fem;
pub mod ingest;
pub mod mesh;
pub mod optimize;
pub mod presets;

pub use error::{Error, Result};
