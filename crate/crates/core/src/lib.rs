//! Numerical laboratory for two-weight bounds of sparse operators on finite
//! dyadic models of `[0,1)`.
//!
//! All integrals are exact finite sums over the finest cells of the model.
//! The modules build on each other bottom-up:
//!
//! - [`lattice`]: cubes, weighted models, exact measures and averages;
//! - [`sparse`]: ½-sparse families, exceptional sets, packing sums;
//! - [`analysis`]: maximal function, entropy functional, bump and testing constants;
//! - [`operator`]: the sparse operator and its `L^p(σ) → L^p(w)` norm;
//! - [`theorems`]: one report per inequality, with explicit constants;
//! - [`search`]: annealing search for extremal weight pairs;
//! - [`ensemble`]: seeded sweeps over random instances.

pub mod analysis;
pub mod ensemble;
pub mod error;
pub mod lattice;
pub mod operator;
pub mod search;
pub mod sparse;
pub mod theorems;
pub mod weights;

pub use error::{Error, Result};
pub use lattice::{CellFunction, Cube, Measure, WeightedModel};
pub use sparse::SparseFamily;
