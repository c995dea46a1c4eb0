//! Uniform Cartesian grids for the scatterer slab and the receiver slab.
//!
//! Both slabs share one transverse lattice: `n × n` nodes at
//! `x_i = x_min + i·hx`, `i = 0..n`, which the 2D FFT treats as one period
//! of a periodic function. Axial nodes are stored explicitly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIFORM_TOL: f64 = 1e-9;

/// A uniform `n × n × nz` grid over `[x_min, x_max) × [y_min, y_max) × {z_nodes}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid3D {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
    n: usize,
    z_nodes: Vec<f64>,
}

/// Closed axial interval sampled with `count` nodes including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxialRange {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + i as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Transverse node count per axis; a power of two.
    pub n: usize,
    /// Scatterer slab `[z1, z2]` with `M` nodes.
    pub scatterer: AxialRange,
    /// Receiver slab `[z3, z4]` with `M1` nodes.
    pub receiver: AxialRange,
}

impl GridConfig {
    /// Thick-layer geometry: `X = [-10,10]² × [-0.5,1.5]`, `Y = [-10,10]² × [6.01,6.5]`.
    pub fn thick_layer(n: usize, m: usize, m1: usize) -> Self {
        Self {
            x_min: -10.0,
            x_max: 10.0,
            y_min: -10.0,
            y_max: 10.0,
            n,
            scatterer: AxialRange::new(-0.5, 1.5, m),
            receiver: AxialRange::new(6.01, 6.5, m1),
        }
    }

    /// Thin-layer geometry: receivers in `[6.01, 6.02]`.
    pub fn thin_layer(n: usize, m: usize, m1: usize) -> Self {
        Self {
            receiver: AxialRange::new(6.01, 6.02, m1),
            ..Self::thick_layer(n, m, 2)
        }
    }
}

/// Builds the scatterer grid `X` and receiver grid `Y` sharing one transverse lattice.
pub fn make_grids(config: &GridConfig) -> Result<(Grid3D, Grid3D)> {
    for (name, r) in [("scatterer", &config.scatterer), ("receiver", &config.receiver)] {
        if r.count < 2 {
            return Err(Error::InvalidGrid(format!(
                "{name} slab needs at least 2 axial nodes, got {}",
                r.count
            )));
        }
        if !(r.max > r.min) {
            return Err(Error::InvalidGrid(format!(
                "{name} slab bounds not ordered: [{}, {}]",
                r.min, r.max
            )));
        }
    }
    let (s, r) = (&config.scatterer, &config.receiver);
    if s.min <= r.max && r.min <= s.max {
        return Err(Error::OverlappingLayers {
            x_min: s.min,
            x_max: s.max,
            recv_min: r.min,
            recv_max: r.max,
        });
    }
    let x = Grid3D::new(
        config.x_min,
        config.x_max,
        config.y_min,
        config.y_max,
        config.n,
        s.nodes(),
    )?;
    let y = Grid3D::new(
        config.x_min,
        config.x_max,
        config.y_min,
        config.y_max,
        config.n,
        r.nodes(),
    )?;
    Ok((x, y))
}

impl Grid3D {
    pub fn new(
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
        n: usize,
        z_nodes: Vec<f64>,
    ) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "transverse size must be a power of two >= 2, got {n}"
            )));
        }
        if !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::InvalidGrid(format!(
                "transverse bounds not ordered: x [{x_min}, {x_max}], y [{y_min}, {y_max}]"
            )));
        }
        if z_nodes.is_empty() {
            return Err(Error::InvalidGrid("no axial nodes".into()));
        }
        if z_nodes.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidGrid("non-finite axial node".into()));
        }
        if z_nodes.len() > 1 {
            let step = (z_nodes[z_nodes.len() - 1] - z_nodes[0]) / (z_nodes.len() - 1) as f64;
            if !(step > 0.0) {
                return Err(Error::InvalidGrid("axial nodes not increasing".into()));
            }
            for w in z_nodes.windows(2) {
                let d = w[1] - w[0];
                if d <= 0.0 {
                    return Err(Error::InvalidGrid("axial nodes not strictly increasing".into()));
                }
                if (d - step).abs() > UNIFORM_TOL * step.max(1.0) {
                    return Err(Error::InvalidGrid("axial nodes not uniformly spaced".into()));
                }
            }
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            n,
            z_nodes,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nz(&self) -> usize {
        self.z_nodes.len()
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.z_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slab_len(&self) -> usize {
        self.n * self.n
    }

    pub fn z_nodes(&self) -> &[f64] {
        &self.z_nodes
    }

    pub fn bounds(&self) -> [f64; 6] {
        [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.z_nodes[0],
            self.z_nodes[self.z_nodes.len() - 1],
        ]
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y_max - self.y_min) / self.n as f64
    }

    /// Axial spacing; zero for a single-plane grid.
    pub fn hz(&self) -> f64 {
        let nz = self.z_nodes.len();
        if nz < 2 {
            0.0
        } else {
            (self.z_nodes[nz - 1] - self.z_nodes[0]) / (nz - 1) as f64
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    /// `hx·hy·hz`, or the transverse area for single-plane grids.
    pub fn cell_volume(&self) -> f64 {
        let hz = self.hz();
        if hz > 0.0 {
            self.cell_area() * hz
        } else {
            self.cell_area()
        }
    }

    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + ix as f64 * self.hx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        self.y_min + iy as f64 * self.hy()
    }

    pub fn z(&self, iz: usize) -> f64 {
        self.z_nodes[iz]
    }

    /// Flat index in `iz`-major, then `iy`, then `ix` order.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.n + iy) * self.n + ix
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let slab = self.n * self.n;
        let iz = idx / slab;
        let rem = idx % slab;
        (rem % self.n, rem / self.n, iz)
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let (ix, iy, iz) = self.unravel(idx);
        [self.x(ix), self.y(iy), self.z(iz)]
    }

    /// Nearest node to a point, clamped to the grid.
    pub fn nearest(&self, p: [f64; 3]) -> (usize, usize, usize) {
        let clamp = |v: f64, n: usize| -> usize { v.round().clamp(0.0, (n - 1) as f64) as usize };
        let ix = clamp((p[0] - self.x_min) / self.hx(), self.n);
        let iy = clamp((p[1] - self.y_min) / self.hy(), self.n);
        let iz = if self.z_nodes.len() == 1 {
            0
        } else {
            clamp((p[2] - self.z_nodes[0]) / self.hz(), self.z_nodes.len())
        };
        (ix, iy, iz)
    }

    /// Same transverse lattice (bounds and size) as `other`.
    pub fn same_lattice(&self, other: &Grid3D) -> bool {
        self.n == other.n
            && self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.y_min == other.y_min
            && self.y_max == other.y_max
    }

    /// Trapezoidal weights for integrals over the axial nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let nz = self.z_nodes.len();
        let hz = self.hz();
        if nz == 1 {
            return vec![1.0];
        }
        (0..nz)
            .map(|i| if i == 0 || i + 1 == nz { 0.5 * hz } else { hz })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thick_layer_grids() {
        let (x, y) = make_grids(&GridConfig::thick_layer(128, 71, 71)).unwrap();
        assert_eq!(x.nz(), 71);
        assert_eq!(y.nz(), 71);
        assert_eq!(x.n(), 128);
        assert!(x.same_lattice(&y));
        assert_eq!(x.z(0), -0.5);
        assert_eq!(x.z(70), 1.5);
        assert_eq!(y.z(70), 6.5);
        assert!((x.hx() - 20.0 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn thin_layer_grids() {
        let (_, y) = make_grids(&GridConfig::thin_layer(128, 71, 2)).unwrap();
        assert_eq!(y.z_nodes(), &[6.01, 6.02]);
    }

    #[test]
    fn overlap_rejected() {
        let mut cfg = GridConfig::thick_layer(16, 4, 4);
        cfg.scatterer = AxialRange::new(0.0, 1.0, 4);
        cfg.receiver = AxialRange::new(0.5, 2.0, 4);
        assert!(matches!(make_grids(&cfg), Err(Error::OverlappingLayers { .. })));
    }

    #[test]
    fn bad_sizes_rejected() {
        assert!(make_grids(&GridConfig::thick_layer(100, 8, 8)).is_err());
        assert!(make_grids(&GridConfig::thick_layer(16, 1, 8)).is_err());
        assert!(make_grids(&GridConfig::thick_layer(16, 8, 1)).is_err());
        assert!(Grid3D::new(-1.0, 1.0, -1.0, 1.0, 8, vec![0.0, 0.1, 0.3]).is_err());
        assert!(Grid3D::new(-1.0, 1.0, -1.0, 1.0, 8, vec![0.0, -0.1]).is_err());
        assert!(Grid3D::new(1.0, -1.0, -1.0, 1.0, 8, vec![0.0]).is_err());
    }

    #[test]
    fn index_coordinate_round_trip() {
        let (x, _) = make_grids(&GridConfig::thick_layer(16, 9, 3)).unwrap();
        for idx in 0..x.len() {
            let (ix, iy, iz) = x.unravel(idx);
            assert_eq!(x.index(ix, iy, iz), idx);
            assert_eq!(x.nearest(x.coords(idx)), (ix, iy, iz));
        }
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid3D::new(-1.0, 1.0, -1.0, 1.0, 4, AxialRange::new(0.0, 2.0, 5).nodes()).unwrap();
        let w = g.trapezoid_weights();
        let s: f64 = w.iter().zip(g.z_nodes()).map(|(w, z)| w * (3.0 * z + 1.0)).sum();
        assert!((s - 8.0).abs() < 1e-14);
    }
}
