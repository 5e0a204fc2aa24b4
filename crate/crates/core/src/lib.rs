//! Numerical laboratory for the Gaussian membrane model on ℤ^d.

pub mod bessel;
pub mod error;
pub mod experiment;
pub mod green;
pub mod highdim;
pub mod lattice;
pub mod percolation;
pub mod quadrature;
pub mod renorm;
pub mod sampler;

pub use error::{Error, Result};
pub use green::{GreenKind, GreenTable};
pub use lattice::{LatticeVector, Window};
pub use quadrature::{Estimate, QuadratureSpec};
