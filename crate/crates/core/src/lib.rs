//! Spectral Born forward modelling and flat-layer inverse scattering for the
//! 3D Helmholtz equation `Δu + ω²(c0⁻² − ξ)u = −f`.
//!
//! The scatterer occupies a slab `X` and data are recorded in a disjoint slab
//! `Y`. After a 2D Fourier transform in the transverse plane the inverse
//! problem decouples into one small first-kind system per transverse mode,
//! solved here by truncated SVD or Tikhonov regularization.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod field;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod io;
pub mod metrics;
pub mod physics;
pub mod pipeline;
pub mod regularize;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{ComplexField, RealField, SpectralField};
pub use grid::{make_grids, Grid3D, GridConfig};
pub use num_complex::Complex64;
pub use spectral::{ModeLattice, SpectralTransform};
