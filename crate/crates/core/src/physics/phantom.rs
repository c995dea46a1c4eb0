//! Analytic inhomogeneity model `ξ(x) = c0⁻² − c(x)⁻²` built from clipped
//! quadratic bumps, plus the contrast and `ξ → c` conversions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::grid::Grid3D;

/// One bump `weight·(1 − q/radius²)_+` with
/// `q = |x − center|² + cross·(y − cy)(z − cz)`.
///
/// `q` is used as a quadratic form directly; it is never square-rooted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: [f64; 3],
    pub radius: f64,
    pub weight: f64,
    #[serde(default)]
    pub cross: f64,
}

impl Bump {
    #[inline]
    pub fn quadratic_form(&self, x: f64, y: f64, z: f64) -> f64 {
        let (dx, dy, dz) = (x - self.center[0], y - self.center[1], z - self.center[2]);
        dx * dx + dy * dy + dz * dz + self.cross * dy * dz
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64, z: f64) -> f64 {
        let q = self.quadratic_form(x, y, z);
        self.weight * (1.0 - q / (self.radius * self.radius)).max(0.0)
    }

    /// Half-widths of an axis-aligned box containing the support.
    ///
    /// For `|cross| < 2` the form is positive definite; its smallest
    /// eigenvalue in the `(y, z)` block is `1 − |cross|/2`.
    pub fn support_half_widths(&self) -> [f64; 3] {
        let lam = (1.0 - 0.5 * self.cross.abs()).max(1e-12);
        let r = self.radius / lam.sqrt();
        [self.radius, r, r]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub amplitude: f64,
    pub bumps: Vec<Bump>,
}

impl Phantom {
    /// Three-bump test medium with amplitude `a0`.
    pub fn three_bumps(a0: f64) -> Self {
        Self {
            amplitude: a0,
            bumps: vec![
                Bump {
                    center: [1.0, 2.0, 0.5],
                    radius: 0.4,
                    weight: 1.0,
                    cross: 0.0,
                },
                Bump {
                    center: [4.0, -3.0, 0.5],
                    radius: 0.25,
                    weight: 2.0,
                    cross: 1.5,
                },
                Bump {
                    center: [-3.0, 0.0, 0.45],
                    radius: 0.3,
                    weight: 2.5,
                    cross: -1.5,
                },
            ],
        }
    }

    pub fn zero() -> Self {
        Self {
            amplitude: 0.0,
            bumps: Vec::new(),
        }
    }

    pub fn xi(&self, x: f64, y: f64, z: f64) -> f64 {
        self.amplitude * self.bumps.iter().map(|b| b.value(x, y, z)).sum::<f64>()
    }

    pub fn sample(&self, grid: &Grid3D) -> RealField {
        RealField::from_fn(grid.clone(), |x, y, z| self.xi(x, y, z))
    }

    pub fn centers(&self) -> Vec<[f64; 3]> {
        self.bumps.iter().map(|b| b.center).collect()
    }

    /// Largest value of `ξ` over the bump centres.
    ///
    /// Each clipped bump peaks at its centre, so this is the global maximum
    /// whenever the supports are disjoint.
    pub fn max_xi(&self) -> f64 {
        self.bumps
            .iter()
            .map(|b| self.xi(b.center[0], b.center[1], b.center[2]))
            .fold(0.0, f64::max)
    }

    pub fn is_identically_zero(&self) -> bool {
        self.amplitude == 0.0 || self.bumps.iter().all(|b| b.weight == 0.0)
    }
}

/// `ξ(x, y, z)` of `phantom`.
pub fn phantom_xi(phantom: &Phantom, x: f64, y: f64, z: f64) -> f64 {
    phantom.xi(x, y, z)
}

/// `Δc/c0 = max 1/√(1 − c0²·ξ) − 1` from a known maximum of `ξ`.
pub fn contrast_from_max(max_xi: f64, c0: f64) -> Result<f64> {
    let radicand = 1.0 - c0 * c0 * max_xi;
    if !(radicand > 0.0) {
        return Err(Error::ImaginarySpeed { max_xi, c0 });
    }
    Ok(1.0 / radicand.sqrt() - 1.0)
}

/// Relative peak speed contrast of `phantom` against background `c0`.
pub fn contrast(phantom: &Phantom, c0: f64) -> Result<f64> {
    contrast_from_max(phantom.max_xi(), c0)
}

/// `c = 1/√(c0⁻² − ξ)` pointwise.
pub fn xi_to_speed(xi: &RealField, c0: f64) -> Result<RealField> {
    let inv = 1.0 / (c0 * c0);
    let mut out = Vec::with_capacity(xi.values().len());
    for (index, &v) in xi.values().iter().enumerate() {
        let r = inv - v;
        if !(r > 0.0) {
            return Err(Error::NonpositiveRadicand { index });
        }
        out.push(if v == 0.0 { c0 } else { 1.0 / r.sqrt() });
    }
    RealField::new(xi.grid().clone(), out)
}

/// `ξ = c0⁻² − c⁻²` pointwise.
pub fn speed_to_xi(speed: &RealField, c0: f64) -> Result<RealField> {
    let inv = 1.0 / (c0 * c0);
    let out = speed.values().iter().map(|c| inv - 1.0 / (c * c)).collect();
    RealField::new(speed.grid().clone(), out)
}
