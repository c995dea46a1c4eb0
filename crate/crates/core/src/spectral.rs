//! Transverse 2D Fourier transforms and the discrete mode lattice.
//!
//! The forward transform approximates the continuous integral
//!
//! ```text
//! Ã(Ω) = ∫∫ a(x, y) exp(+i(Ω1·x + Ω2·y)) dx dy
//! ```
//!
//! by `hx·hy·Σ a(x_i, y_j) exp(+i(Ω1·x_i + Ω2·y_j))` on the periodic lattice,
//! at the standard DFT frequencies `Ω = 2πk/(N·h)`, `k ∈ [−N/2, N/2)`. The
//! inverse multiplies by `ΔΩ1·ΔΩ2/(2π)² = 1/(N·hx·N·hy)` and uses the
//! opposite sign, so a round trip is exact up to rounding.
//!
//! Modes are flattened as `m = b2·N + b1`, where `b1, b2` are FFT bins.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::exec;
use crate::field::{ComplexField, SpectralField};
use crate::grid::Grid3D;

/// Discrete `(Ω1, Ω2)` lattice for an `N × N` transverse grid.
///
/// Modes related by sign flips of either component (and by swapping the
/// components when `hx == hy`) form an *orbit*. Any function of the radial
/// transverse distance sampled on the lattice has one spectral value per
/// orbit, which the Green's kernel tables exploit.
#[derive(Debug, Clone)]
pub struct ModeLattice {
    n: usize,
    hx: f64,
    hy: f64,
    x_min: f64,
    y_min: f64,
    omega1: Vec<f64>,
    omega2: Vec<f64>,
    mode_orbit: Vec<u32>,
    orbit_rep: Vec<usize>,
    orbit_start: Vec<usize>,
    orbit_modes: Vec<usize>,
}

/// Signed frequency index of FFT bin `b`.
#[inline]
pub fn bin_to_k(b: usize, n: usize) -> i64 {
    if b < n / 2 {
        b as i64
    } else {
        b as i64 - n as i64
    }
}

impl ModeLattice {
    pub fn new(grid: &Grid3D) -> Self {
        let n = grid.n();
        let (hx, hy) = (grid.hx(), grid.hy());
        let dw1 = 2.0 * PI / (n as f64 * hx);
        let dw2 = 2.0 * PI / (n as f64 * hy);
        let square = hx == hy;
        let half = n / 2;
        let mut omega1 = Vec::with_capacity(n * n);
        let mut omega2 = Vec::with_capacity(n * n);
        let mut key_of = Vec::with_capacity(n * n);
        for b2 in 0..n {
            for b1 in 0..n {
                let (k1, k2) = (bin_to_k(b1, n), bin_to_k(b2, n));
                omega1.push(k1 as f64 * dw1);
                omega2.push(k2 as f64 * dw2);
                let (a, b) = (k1.unsigned_abs() as usize, k2.unsigned_abs() as usize);
                let (a, b) = if square && b > a { (b, a) } else { (a, b) };
                key_of.push(a * (half + 1) + b);
            }
        }
        // Dense ids in first-seen order.
        let mut id_of_key = vec![u32::MAX; (half + 1) * (half + 1)];
        let mut mode_orbit = Vec::with_capacity(n * n);
        let mut orbit_rep = Vec::new();
        for (m, &key) in key_of.iter().enumerate() {
            if id_of_key[key] == u32::MAX {
                id_of_key[key] = orbit_rep.len() as u32;
                orbit_rep.push(m);
            }
            mode_orbit.push(id_of_key[key]);
        }
        let n_orbits = orbit_rep.len();
        let mut counts = vec![0usize; n_orbits + 1];
        for &o in &mode_orbit {
            counts[o as usize + 1] += 1;
        }
        for i in 0..n_orbits {
            counts[i + 1] += counts[i];
        }
        let orbit_start = counts.clone();
        let mut fill = counts;
        let mut orbit_modes = vec![0usize; n * n];
        for (m, &o) in mode_orbit.iter().enumerate() {
            orbit_modes[fill[o as usize]] = m;
            fill[o as usize] += 1;
        }
        Self {
            n,
            hx,
            hy,
            x_min: grid.x_min(),
            y_min: grid.y_min(),
            omega1,
            omega2,
            mode_orbit,
            orbit_rep,
            orbit_start,
            orbit_modes,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn omega(&self, m: usize) -> (f64, f64) {
        (self.omega1[m], self.omega2[m])
    }

    pub fn omega_abs(&self, m: usize) -> f64 {
        self.omega1[m].hypot(self.omega2[m])
    }

    pub fn omega1(&self) -> &[f64] {
        &self.omega1
    }

    pub fn omega2(&self) -> &[f64] {
        &self.omega2
    }

    /// Flat index of the mode with signed frequency indices `(k1, k2)`.
    pub fn mode_index(&self, k1: i64, k2: i64) -> usize {
        let n = self.n as i64;
        let b1 = k1.rem_euclid(n) as usize;
        let b2 = k2.rem_euclid(n) as usize;
        b2 * self.n + b1
    }

    /// Mode with `(−Ω1, −Ω2)` (the Nyquist index maps to itself).
    pub fn negated(&self, m: usize) -> usize {
        let (b1, b2) = (m % self.n, m / self.n);
        let k1 = bin_to_k(b1, self.n);
        let k2 = bin_to_k(b2, self.n);
        self.mode_index(-k1, -k2)
    }

    pub fn n_orbits(&self) -> usize {
        self.orbit_rep.len()
    }

    pub fn orbit_of(&self, m: usize) -> usize {
        self.mode_orbit[m] as usize
    }

    pub fn orbit_representative(&self, orbit: usize) -> usize {
        self.orbit_rep[orbit]
    }

    pub fn orbit_members(&self, orbit: usize) -> &[usize] {
        &self.orbit_modes[self.orbit_start[orbit]..self.orbit_start[orbit + 1]]
    }

    /// `exp(i(Ω1·x_min + Ω2·y_min))`, the lattice-origin phase of mode `m`.
    fn origin_phase(&self, m: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.omega1[m] * self.x_min + self.omega2[m] * self.y_min)
    }
}

/// FFT plans plus the lattice for one transverse grid. Cheap to share.
#[derive(Clone)]
pub struct SpectralTransform {
    lattice: Arc<ModeLattice>,
    // exp(+i...) sums, unnormalised
    plus: Arc<dyn Fft<f64>>,
    // exp(-i...) sums, unnormalised
    minus: Arc<dyn Fft<f64>>,
    fwd_factor: Vec<Complex64>,
    inv_factor: Vec<Complex64>,
}

impl std::fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("n", &self.lattice.n)
            .finish()
    }
}

impl SpectralTransform {
    pub fn new(grid: &Grid3D) -> Self {
        let lattice = Arc::new(ModeLattice::new(grid));
        let n = lattice.n;
        let mut planner = FftPlanner::new();
        let plus = planner.plan_fft_inverse(n);
        let minus = planner.plan_fft_forward(n);
        let area = lattice.hx * lattice.hy;
        let inv_scale = 1.0 / (n as f64 * lattice.hx * n as f64 * lattice.hy);
        let fwd_factor = (0..n * n).map(|m| lattice.origin_phase(m) * area).collect();
        let inv_factor = (0..n * n)
            .map(|m| lattice.origin_phase(m).conj() * inv_scale)
            .collect();
        Self {
            lattice,
            plus,
            minus,
            fwd_factor,
            inv_factor,
        }
    }

    pub fn lattice(&self) -> &Arc<ModeLattice> {
        &self.lattice
    }

    pub fn n(&self) -> usize {
        self.lattice.n
    }

    /// Unnormalised `Σ a_ij exp(+2πi(k1·i + k2·j)/N)` in place.
    pub fn fft2_plus(&self, data: &mut [Complex64]) {
        fft2(&*self.plus, self.lattice.n, data);
    }

    /// Unnormalised `Σ a_ij exp(−2πi(k1·i + k2·j)/N)` in place.
    pub fn fft2_minus(&self, data: &mut [Complex64]) {
        fft2(&*self.minus, self.lattice.n, data);
    }

    /// Forward transform of one `N × N` slab (row index `iy`) into bin order.
    pub fn forward_slab(&self, slab: &[Complex64]) -> Vec<Complex64> {
        let mut buf = slab.to_vec();
        self.fft2_plus(&mut buf);
        for (v, f) in buf.iter_mut().zip(&self.fwd_factor) {
            *v *= f;
        }
        buf
    }

    /// Inverse of [`forward_slab`](Self::forward_slab).
    pub fn inverse_slab(&self, spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum
            .iter()
            .zip(&self.inv_factor)
            .map(|(v, f)| v * f)
            .collect();
        self.fft2_minus(&mut buf);
        buf
    }

    pub fn forward_xy(&self, field: &ComplexField) -> SpectralField {
        let grid = field.grid().clone();
        assert_eq!(grid.n(), self.lattice.n, "grid does not match transform lattice");
        let nz = grid.nz();
        let slabs = exec::map_range(nz, |iz| self.forward_slab(field.slab(iz)));
        let values = slabs_to_modes(&slabs, self.lattice.len(), nz);
        SpectralField::from_parts_unchecked(grid, self.lattice.clone(), values)
    }

    pub fn inverse_xy(&self, spec: &SpectralField) -> ComplexField {
        let grid = spec.grid().clone();
        assert_eq!(grid.n(), self.lattice.n, "grid does not match transform lattice");
        let nz = grid.nz();
        let modes = self.lattice.len();
        let vals = spec.values();
        let slabs = exec::map_range(nz, |iz| {
            let spectrum: Vec<Complex64> = (0..modes).map(|m| vals[m * nz + iz]).collect();
            self.inverse_slab(&spectrum)
        });
        ComplexField::from_parts_unchecked(grid, slabs.concat())
    }
}

/// Reorders `slabs[iz][m]` into mode-major `values[m * nz + iz]`.
pub(crate) fn slabs_to_modes(slabs: &[Vec<Complex64>], modes: usize, nz: usize) -> Vec<Complex64> {
    let mut values = vec![Complex64::new(0.0, 0.0); modes * nz];
    if nz == 0 {
        return values;
    }
    exec::for_each_chunk_mut(&mut values, nz, |m, chunk| {
        for (iz, v) in chunk.iter_mut().enumerate() {
            *v = slabs[iz][m];
        }
    });
    values
}

fn fft2(plan: &dyn Fft<f64>, n: usize, data: &mut [Complex64]) {
    debug_assert_eq!(data.len(), n * n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(data, &mut scratch);
    transpose_square(data, n);
    plan.process_with_scratch(data, &mut scratch);
    transpose_square(data, n);
}

fn transpose_square(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Forward transform with a transform built on the fly.
pub fn forward_xy(field: &ComplexField) -> SpectralField {
    SpectralTransform::new(field.grid()).forward_xy(field)
}

/// Inverse transform with a transform built on the fly.
pub fn inverse_xy(spec: &SpectralField) -> ComplexField {
    SpectralTransform::new(spec.grid()).inverse_xy(spec)
}
