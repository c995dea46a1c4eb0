//! Complex and real scalar fields on a [`Grid3D`], and their spectral counterpart.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::spectral::ModeLattice;

/// Complex samples in `iz`-major, `iy`, `ix` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid3D,
    values: Vec<Complex64>,
}

/// Real samples in the same layout as [`ComplexField`].
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid3D,
    values: Vec<f64>,
}

/// Transverse spectrum of a field: one axial profile per mode.
///
/// Values are stored mode-major, `values[m * nz + iz]`, with `m` the flat
/// index into the [`ModeLattice`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: Grid3D,
    lattice: Arc<ModeLattice>,
    values: Vec<Complex64>,
}

fn check_finite(values: &[Complex64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::ShapeMismatch(format!("non-finite value at index {i}")));
    }
    Ok(())
}

impl ComplexField {
    pub fn new(grid: Grid3D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3D) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid3D, f: impl Fn(f64, f64, f64) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                f(x, y, z)
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid3D, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn slab(&self, iz: usize) -> &[Complex64] {
        let s = self.grid.slab_len();
        &self.values[iz * s..(iz + 1) * s]
    }

    pub fn scale(&self, alpha: Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn real_part(&self) -> RealField {
        RealField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }
}

impl RealField {
    pub fn new(grid: Grid3D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid3D) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid3D, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let [x, y, z] = grid.coords(i);
                f(x, y, z)
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid3D, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slab(&self, iz: usize) -> &[f64] {
        let s = self.grid.slab_len();
        &self.values[iz * s..(iz + 1) * s]
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Discrete `L2` norm, `sqrt(Σ|v|²·hx·hy·hz)`.
pub fn l2_norm(field: &ComplexField) -> f64 {
    let sum: f64 = field.values.iter().map(|v| v.norm_sqr()).sum();
    (sum * field.grid.cell_volume()).sqrt()
}

/// Discrete `L2` norm of a real field, weighted like [`l2_norm`].
pub fn l2_norm_real(field: &RealField) -> f64 {
    let sum: f64 = field.values.iter().map(|v| v * v).sum();
    (sum * field.grid.cell_volume()).sqrt()
}

impl SpectralField {
    pub fn new(grid: Grid3D, lattice: Arc<ModeLattice>, values: Vec<Complex64>) -> Result<Self> {
        if lattice.len() != grid.slab_len() {
            return Err(Error::ShapeMismatch(format!(
                "lattice has {} modes, grid slab has {} nodes",
                lattice.len(),
                grid.slab_len()
            )));
        }
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} spectral values, got {}",
                grid.len(),
                values.len()
            )));
        }
        check_finite(&values)?;
        Ok(Self {
            grid,
            lattice,
            values,
        })
    }

    pub fn zeros(grid: Grid3D, lattice: Arc<ModeLattice>) -> Self {
        let values = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self {
            grid,
            lattice,
            values,
        }
    }

    pub(crate) fn from_parts_unchecked(
        grid: Grid3D,
        lattice: Arc<ModeLattice>,
        values: Vec<Complex64>,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid,
            lattice,
            values,
        }
    }

    pub fn grid(&self) -> &Grid3D {
        &self.grid
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    pub fn nz(&self) -> usize {
        self.grid.nz()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// Axial profile of mode `m`.
    pub fn mode(&self, m: usize) -> &[Complex64] {
        let nz = self.grid.nz();
        &self.values[m * nz..(m + 1) * nz]
    }

    /// Plain Euclidean norm of all spectral coefficients.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Euclidean norm of `self − other`.
    pub fn distance(&self, other: &SpectralField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn same_shape(&self, other: &SpectralField) -> bool {
        self.grid == other.grid && self.lattice.n() == other.lattice.n()
    }
}
