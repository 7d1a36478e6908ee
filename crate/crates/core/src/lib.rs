//! Numerical laboratory for the Euler scheme of elliptic SDEs: simulation on
//! counter-based Brownian lattices, exact Gaussian oracles for affine
//! problems, optimal-transport distances between point clouds, a fuzzer for
//! a trace inequality between positive definite matrices, and convergence
//! rate fitting for sup-in-time Wasserstein curves.

pub mod checks;
pub mod error;
pub mod euler_sim;
pub mod gaussian_oracle;
pub mod linalg;
pub mod matrix_lemma;
pub mod quadrature;
pub mod rate_harness;
pub mod rng;
pub mod sde_model;
pub mod time_grid;
pub mod wasserstein;

pub use error::{Error, Result};
pub use sde_model::{catalog, AffineStructure, Regularity, SdeSpec};
pub use time_grid::{GridKind, NodeConvention, TimeGrid};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
