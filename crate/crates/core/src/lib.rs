//! Paramagnon flux-noise simulator for disordered Heisenberg spin lattices.
//!
//! Units: ħ = k_B = d0 = |J| = F0 = 1. Rates are in d0|J|/ħ, temperatures in
//! |J|/k_B, lengths in a0.
//!
//! The pipeline for one disorder instance is
//! [`lattice`] → [`couplings`] → [`spectral`] → [`fluxnoise`]; [`analysis`]
//! runs ensembles and fits, and [`homogeneous`] holds the closed-form limits
//! used as oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod couplings;
mod error;
pub mod exec;
pub mod fluxnoise;
pub mod homogeneous;
pub mod io;
pub mod lattice;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Exec;
