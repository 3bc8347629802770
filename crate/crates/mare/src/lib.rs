//! Magnetization-resolved master equation (MARE) engine.
//!
//! A qubit is repeatedly prepared, let interact with a spin bath, and reset.
//! The bath is tracked only through its magnetization `m`; the joint state
//! is a 2×2 block `ρ_m` per magnetization. Flip-flops conserve
//! `M = m + S_{b̂}`, so each evolution step is a set of independent 2×2
//! stochastic blocks plus decaying coherences.

pub mod cli;
pub mod engine;
pub mod error;
pub mod grid;
pub mod numeric;
pub mod observables;
pub mod protocols;
pub mod scenario;

pub use error::{Error, Result};
