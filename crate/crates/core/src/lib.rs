//! Residual diffusivity of noisy expanding Bernoulli maps.
//!
//! The crate builds piecewise-affine expanding maps of `R^d`, simulates the
//! noisy process `X_{n+1} = φ(X_n) + ε ξ_{n+1}`, and computes both Monte Carlo
//! and exact (grid or finite-state) estimates of its effective diffusivity.

pub mod diffusivity;
pub mod lattice_oracle;
pub mod map_core;
pub mod minor_check;
pub mod numerics;
pub mod process;
pub mod torus_transfer;
