//! Free-space Helmholtz Green's function and its transverse spectra.
//!
//! All quantities use `c0 = 1`, so the background wavenumber equals the
//! angular frequency.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::Grid3D;
use crate::spectral::{bin_to_k, ModeLattice, SpectralTransform};

/// Offsets closer than this are treated as equal.
const OFFSET_TOL: f64 = 1e-10;

/// `G(ρ) = −exp(i·k0·ρ)/(4πρ)`.
pub fn green_point(rho: f64, k0: f64) -> Result<Complex64> {
    if !(rho > 0.0) {
        return Err(Error::SingularDistance);
    }
    Ok(-Complex64::from_polar(1.0, k0 * rho) / (4.0 * PI * rho))
}

/// Mean of `G(√(r² + d²))` over the disk `r ≤ radius` in a plane at axial
/// distance `d ≥ 0`.
///
/// `∫₀^R G·2πr dr = −½ ∫_d^S e^{iks} ds` with `S = √(R² + d²)`, so the mean
/// is `−(e^{ikS} − e^{ikd}) / (2πR²·ik)`. Finite at `d = 0`.
pub fn disk_mean_green(radius: f64, d: f64, k0: f64) -> Complex64 {
    let s = radius.hypot(d);
    let integral = phase_integral(d, s, k0);
    -integral / (2.0 * PI * radius * radius)
}

/// `∫_a^b e^{iks} ds`, stable for small `k`.
fn phase_integral(a: f64, b: f64, k: f64) -> Complex64 {
    let len = b - a;
    if (k * len).abs() < 1e-4 {
        // e^{ika} · len · (1 + ikL/2 + (ikL)²/6)
        let ikl = Complex64::new(0.0, k * len);
        Complex64::from_polar(1.0, k * a) * len * (1.0 + ikl / 2.0 + ikl * ikl / 6.0)
    } else {
        (Complex64::from_polar(1.0, k * b) - Complex64::from_polar(1.0, k * a))
            / Complex64::new(0.0, k)
    }
}

/// Samples `G(√(x² + y² + d²))` on the wrapped transverse offset lattice
/// (offset `i·hx` for bin `i`, `i ∈ [−N/2, N/2)`), FFT-integrates it and
/// returns the full spectrum in bin order:
/// `Ĝ(d, Ω) ≈ hx·hy·Σ G(r_ij, d)·exp(iΩ·r_ij)`.
///
/// The sample at `ρ = 0` is replaced by the mean of `G` over a disk with the
/// cell's area.
pub fn offset_spectrum(d: f64, k0: f64, transform: &SpectralTransform) -> Vec<Complex64> {
    let lat = transform.lattice();
    let n = lat.n();
    let (hx, hy) = (lat.hx(), lat.hy());
    let d = d.abs();
    let mut buf = Vec::with_capacity(n * n);
    for b2 in 0..n {
        let y = bin_to_k(b2, n) as f64 * hy;
        for b1 in 0..n {
            let x = bin_to_k(b1, n) as f64 * hx;
            let rho = (x * x + y * y + d * d).sqrt();
            if rho < OFFSET_TOL {
                buf.push(disk_mean_green((hx * hy / PI).sqrt(), 0.0, k0));
            } else {
                buf.push(-Complex64::from_polar(1.0, k0 * rho) / (4.0 * PI * rho));
            }
        }
    }
    transform.fft2_plus(&mut buf);
    let area = hx * hy;
    buf.iter_mut().for_each(|v| *v *= area);
    buf
}

/// Spectral Green's kernel `Ĝ(z_k − z'_l, ω, Ω)` for every receiver node
/// `z_k` and scatterer node `z'_l`.
///
/// Entries depend only on `|z_k − z'_l|` and on the lattice orbit of `Ω`, so
/// the table stores one value per (orbit, distinct offset).
#[derive(Debug, Clone)]
pub struct GreenKernelTable {
    omega: f64,
    lattice: Arc<ModeLattice>,
    rows: usize,
    cols: usize,
    offsets: Vec<f64>,
    /// `index[k * cols + l]` into `offsets`.
    index: Vec<u32>,
    /// `values[orbit * offsets.len() + j]`.
    values: Vec<Complex64>,
}

/// Distinct axial distances `|z_k − z'_l|` and, for every receiver/scatterer
/// pair in row-major order, the position of its distance in that list.
pub fn offset_table(scatterers: &Grid3D, receivers: &Grid3D) -> (Vec<f64>, Vec<u32>) {
    let mut raw: Vec<f64> = Vec::with_capacity(receivers.nz() * scatterers.nz());
    for &zk in receivers.z_nodes() {
        for &zl in scatterers.z_nodes() {
            raw.push((zk - zl).abs());
        }
    }
    let mut offsets = raw.clone();
    offsets.sort_by(f64::total_cmp);
    offsets.dedup_by(|a, b| (*a - *b).abs() <= OFFSET_TOL * (1.0 + b.abs()));
    let index = raw
        .iter()
        .map(|d| offsets.partition_point(|o| *o < d - OFFSET_TOL * (1.0 + d.abs())) as u32)
        .collect();
    (offsets, index)
}

/// Builds the kernel table for receivers on `receivers` and scatterers on `scatterers`.
///
/// Passing the scatterer grid twice gives the `X → X` table used by the
/// Born iteration and by the internal-field recomputation.
pub fn build_green_kernel(
    scatterers: &Grid3D,
    receivers: &Grid3D,
    omega: f64,
    transform: &SpectralTransform,
) -> Result<GreenKernelTable> {
    if !scatterers.same_lattice(receivers) {
        return Err(Error::ShapeMismatch(
            "scatterer and receiver grids must share the transverse lattice".into(),
        ));
    }
    if scatterers.n() != transform.n() {
        return Err(Error::ShapeMismatch("transform lattice does not match grids".into()));
    }
    let rows = receivers.nz();
    let cols = scatterers.nz();
    let (offsets, index) = offset_table(scatterers, receivers);

    let lat = transform.lattice().clone();
    let n_orbits = lat.n_orbits();
    let per_offset: Vec<Vec<Complex64>> = exec::map_range(offsets.len(), |j| {
        let spec = offset_spectrum(offsets[j], omega, transform);
        (0..n_orbits)
            .map(|o| spec[lat.orbit_representative(o)])
            .collect()
    });
    let n_off = offsets.len();
    let mut values = vec![Complex64::new(0.0, 0.0); n_orbits * n_off];
    exec::for_each_chunk_mut(&mut values, n_off, |o, chunk| {
        for (j, v) in chunk.iter_mut().enumerate() {
            *v = per_offset[j][o];
        }
    });
    Ok(GreenKernelTable {
        omega,
        lattice: lat,
        rows,
        cols,
        offsets,
        index,
        values,
    })
}

impl GreenKernelTable {
    /// Reassembles a table from stored parts (e.g. a disk cache).
    pub fn from_parts(
        omega: f64,
        lattice: Arc<ModeLattice>,
        rows: usize,
        cols: usize,
        offsets: Vec<f64>,
        index: Vec<u32>,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if index.len() != rows * cols
            || values.len() != lattice.n_orbits() * offsets.len()
            || index.iter().any(|&i| i as usize >= offsets.len())
        {
            return Err(Error::ShapeMismatch("inconsistent kernel table parts".into()));
        }
        Ok(Self {
            omega,
            lattice,
            rows,
            cols,
            offsets,
            index,
            values,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    /// Number of receiver nodes.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of scatterer nodes.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offset_index(&self) -> &[u32] {
        &self.index
    }

    pub fn raw_values(&self) -> &[Complex64] {
        &self.values
    }

    /// All distinct-offset values for one orbit.
    #[inline]
    pub fn orbit_values(&self, orbit: usize) -> &[Complex64] {
        let n = self.offsets.len();
        &self.values[orbit * n..(orbit + 1) * n]
    }

    /// `Ĝ(z_k − z'_l, ω, Ω^(m))`.
    #[inline]
    pub fn entry(&self, mode: usize, row: usize, col: usize) -> Complex64 {
        let o = self.lattice.orbit_of(mode);
        self.orbit_values(o)[self.index[row * self.cols + col] as usize]
    }

    /// Dense `rows × cols` kernel matrix of one orbit, row-major.
    pub fn orbit_matrix(&self, orbit: usize) -> Vec<Complex64> {
        let vals = self.orbit_values(orbit);
        self.index.iter().map(|&j| vals[j as usize]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grids, GridConfig};

    #[test]
    fn static_unit_distance() {
        let g = green_point(1.0, 0.0).unwrap();
        assert!((g - Complex64::new(-1.0 / (4.0 * PI), 0.0)).norm() < 1e-16);
    }

    #[test]
    fn magnitude_law() {
        for k in [0.0, 1.0, 2.0, 7.5] {
            assert!((green_point(2.0, k).unwrap().norm() - 1.0 / (8.0 * PI)).abs() < 1e-16);
        }
    }

    #[test]
    fn oscillatory_value() {
        let g = green_point(1.0, 2.0).unwrap();
        let want = -Complex64::from_polar(1.0, 2.0) / (4.0 * PI);
        assert!((g - want).norm() < 1e-16);
    }

    #[test]
    fn zero_distance_is_an_error() {
        assert!(matches!(green_point(0.0, 1.0), Err(Error::SingularDistance)));
    }

    #[test]
    fn disk_mean_matches_numeric_average() {
        let (r, k) = (0.2, 3.0);
        for d in [0.0, 0.05, 0.4] {
            // midpoint rule in r, weight 2πr
            let steps = 200_000;
            let h = r / steps as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..steps {
                let rr = (i as f64 + 0.5) * h;
                acc += green_point(rr.hypot(d), k).unwrap() * 2.0 * PI * rr * h;
            }
            let mean = acc / (PI * r * r);
            let closed = disk_mean_green(r, d, k);
            assert!((mean - closed).norm() < 1e-6 * closed.norm(), "d={d}");
        }
        // static limit −1/(2πR)
        let s = disk_mean_green(0.2, 0.0, 0.0);
        assert!((s.re + 1.0 / (2.0 * PI * 0.2)).abs() < 1e-14);
    }

    #[test]
    fn table_is_translation_invariant_and_even() {
        let (x, y) = make_grids(&GridConfig::thick_layer(16, 5, 4)).unwrap();
        let t = SpectralTransform::new(&x);
        let xx = build_green_kernel(&x, &x, 2.0, &t).unwrap();
        assert_eq!(xx.offsets().len(), 5);
        assert!(xx.is_finite());
        let lat = t.lattice().clone();
        for m in 0..lat.len() {
            for k in 0..5 {
                for l in 0..5 {
                    // same |k − l| → identical entries
                    assert_eq!(xx.entry(m, k, l), xx.entry(m, l, k));
                    if k + 1 < 5 && l + 1 < 5 {
                        assert_eq!(xx.entry(m, k, l), xx.entry(m, k + 1, l + 1));
                    }
                }
            }
            assert_eq!(xx.entry(m, 1, 3), xx.entry(lat.negated(m), 1, 3));
        }
        let xy = build_green_kernel(&x, &y, 2.0, &t).unwrap();
        assert_eq!((xy.rows(), xy.cols()), (4, 5));
    }

    #[test]
    fn raw_spectrum_has_lattice_symmetry() {
        let (x, _) = make_grids(&GridConfig::thick_layer(16, 3, 3)).unwrap();
        let t = SpectralTransform::new(&x);
        let spec = offset_spectrum(0.3, 2.0, &t);
        let lat = t.lattice();
        let scale = spec.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for m in 0..lat.len() {
            let rep = lat.orbit_representative(lat.orbit_of(m));
            assert!((spec[m] - spec[rep]).norm() < 1e-13 * scale);
            assert!((spec[m] - spec[lat.negated(m)]).norm() < 1e-13 * scale);
        }
    }

    #[test]
    fn reciprocity_between_tables() {
        // An X→Y offset also present in an X→X table gives the same value.
        let x = Grid3D::new(-5.0, 5.0, -5.0, 5.0, 8, vec![0.0, 0.5, 1.0, 1.5]).unwrap();
        let y = Grid3D::new(-5.0, 5.0, -5.0, 5.0, 8, vec![2.0, 2.5]).unwrap();
        let t = SpectralTransform::new(&x);
        let xx = build_green_kernel(&x, &x, 1.0, &t).unwrap();
        let xy = build_green_kernel(&x, &y, 1.0, &t).unwrap();
        // |2.0 − 1.0| = 1.0 = |1.0 − 0.0|
        for m in 0..t.lattice().len() {
            assert_eq!(xy.entry(m, 0, 2), xx.entry(m, 2, 0));
        }
    }
}
