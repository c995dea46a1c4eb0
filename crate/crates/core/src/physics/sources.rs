use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, SpectralField};
use crate::grid::Grid3D;
use crate::physics::green::green_point;
use crate::spectral::SpectralTransform;

/// Point (δ-shaped) sources `f(x) = Σ A_m δ(x − x_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSet {
    pub positions: Vec<[f64; 3]>,
    pub amplitudes: Vec<Complex64>,
}

impl SourceSet {
    pub fn new(positions: Vec<[f64; 3]>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if positions.len() != amplitudes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} source positions but {} amplitudes",
                positions.len(),
                amplitudes.len()
            )));
        }
        Ok(Self {
            positions,
            amplitudes,
        })
    }

    /// Eleven unit sources on the line `(0, y, 6)`, `y = −5..=5`.
    pub fn line_array() -> Self {
        let positions = (-5..=5).map(|y| [0.0, y as f64, 6.0]).collect();
        Self {
            positions,
            amplitudes: vec![Complex64::new(1.0, 0.0); 11],
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Axial extent `[min z, max z]` of the sources.
    pub fn z_extent(&self) -> Option<(f64, f64)> {
        self.positions.iter().fold(None, |acc, p| match acc {
            None => Some((p[2], p[2])),
            Some((lo, hi)) => Some((lo.min(p[2]), hi.max(p[2]))),
        })
    }

    fn check_off_nodes(&self, grid: &Grid3D) -> Result<()> {
        let tol = 1e-12 * grid.hx().max(grid.hy());
        for (index, p) in self.positions.iter().enumerate() {
            let (ix, iy, iz) = grid.nearest(*p);
            let q = [grid.x(ix), grid.y(iy), grid.z(iz)];
            let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
            if dist <= tol {
                return Err(Error::SourceOnNode {
                    index,
                    x: p[0],
                    y: p[1],
                    z: p[2],
                });
            }
        }
        Ok(())
    }
}

/// `u0(x) = Σ A_m G(|x − x_m|)` sampled on `grid`.
pub fn incident_field(sources: &SourceSet, grid: &Grid3D, omega: f64) -> Result<ComplexField> {
    sources.check_off_nodes(grid)?;
    let values = (0..grid.len())
        .map(|i| {
            let [x, y, z] = grid.coords(i);
            sources
                .positions
                .iter()
                .zip(&sources.amplitudes)
                .map(|(p, a)| {
                    let rho = ((x - p[0]).powi(2) + (y - p[1]).powi(2) + (z - p[2]).powi(2)).sqrt();
                    // off-node check guarantees rho > 0
                    a * green_point(rho, omega).expect("source on node")
                })
                .sum()
        })
        .collect();
    ComplexField::new(grid.clone(), values)
}

/// Transverse spectrum `Ũ0(z, ω, Ω)` of the incident field on `grid`.
pub fn incident_field_spectral(
    sources: &SourceSet,
    grid: &Grid3D,
    omega: f64,
    transform: &SpectralTransform,
) -> Result<SpectralField> {
    let u0 = incident_field(sources, grid, omega)?;
    Ok(transform.forward_xy(&u0))
}
