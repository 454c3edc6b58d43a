//! Spectral KAM numerics for partially hyperbolic affine actions on tori.

pub mod error;
pub mod lattice;
pub mod linalg;
pub mod poly;

pub use error::{KamError, Result};
pub mod fourier;
pub mod grid;
pub mod cohomology;
pub mod family;
pub mod exclusion;
pub mod kam;
pub mod maps;
pub mod estimates;
pub mod fixtures;
