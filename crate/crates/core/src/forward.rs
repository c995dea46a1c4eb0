//! Forward problem: spectral Born iteration for the internal field, synthesis
//! of receiver-layer data, and additive measurement noise.
//!
//! Per transverse mode `Ω` the internal field satisfies
//!
//! ```text
//! Ũ(z) = Ũ0(z) + ω² ∫ Ĝ(z − z') Ṽ(z') dz',   Ṽ = F[ξ · F⁻¹[Ũ]]
//! ```
//!
//! which is iterated from `Ũ0`. The axial integral uses trapezoidal weights
//! on the scatterer grid.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{l2_norm, ComplexField, RealField, SpectralField};
use crate::grid::Grid3D;
use crate::physics::GreenKernelTable;
use crate::spectral::{slabs_to_modes, SpectralTransform};

/// Stopping tolerance on `‖Ũν − Ũν−1‖ / ‖Ũ0‖`.
pub const DEFAULT_BORN_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 500;
/// Consecutive residual increases that count as divergence.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct BornOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BornOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_BORN_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BornResult {
    /// Converged (or last) internal field `Ũν` on the scatterer grid.
    pub u_nu: SpectralField,
    /// `ν`, the number of updates performed.
    pub iterations: usize,
    /// Relative update norms `‖Ũn − Ũn−1‖ / ‖Ũ0‖`, one per iteration.
    pub residual_history: Vec<f64>,
    /// False when `max_iter` was reached first.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ForwardResult {
    pub u_nu: SpectralField,
    pub w_spec: SpectralField,
    pub w_field: ComplexField,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// `ω² ∫ Ĝ(z_k − z') Ṽ(z') dz'` for every receiver node of `table`.
///
/// `source` lives on the scatterer grid; the result lives on `out_grid`,
/// whose axial nodes must be the table's rows.
pub fn apply_kernel(
    table: &GreenKernelTable,
    source: &SpectralField,
    out_grid: &Grid3D,
) -> Result<SpectralField> {
    let cols = source.nz();
    let rows = out_grid.nz();
    if table.cols() != cols || table.rows() != rows {
        return Err(Error::ShapeMismatch(format!(
            "kernel table is {}x{}, fields need {}x{}",
            table.rows(),
            table.cols(),
            rows,
            cols
        )));
    }
    if table.lattice().len() != source.lattice().len() || !out_grid.same_lattice(source.grid()) {
        return Err(Error::ShapeMismatch("kernel lattice does not match field".into()));
    }
    let weights = source.grid().trapezoid_weights();
    let w2 = table.omega() * table.omega();
    let lattice = table.lattice().clone();
    let index = table.offset_index();
    let mut out = vec![Complex64::new(0.0, 0.0); lattice.len() * rows];
    exec::for_each_chunk_mut(&mut out, rows, |m, chunk| {
        let v = source.mode(m);
        if v.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            return;
        }
        let weighted: Vec<Complex64> = v.iter().zip(&weights).map(|(c, w)| c * *w).collect();
        let vals = table.orbit_values(lattice.orbit_of(m));
        for (k, o) in chunk.iter_mut().enumerate() {
            let row = &index[k * cols..(k + 1) * cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, wv) in row.iter().zip(&weighted) {
                acc += vals[*j as usize] * wv;
            }
            *o = acc * w2;
        }
    });
    Ok(SpectralField::from_parts_unchecked(
        out_grid.clone(),
        source.lattice().clone(),
        out,
    ))
}

/// `Ṽ = F[ξ · F⁻¹[Ũ]]`, slab by slab. Slabs where `ξ ≡ 0` are exact zeros.
pub fn contrast_source(
    u: &SpectralField,
    xi: &RealField,
    transform: &SpectralTransform,
) -> Result<SpectralField> {
    if xi.grid() != u.grid() {
        return Err(Error::ShapeMismatch("xi and field grids differ".into()));
    }
    let grid = u.grid();
    let nz = grid.nz();
    let modes = transform.lattice().len();
    let vals = u.values();
    let slabs = exec::map_range(nz, |iz| {
        let xs = xi.slab(iz);
        if xs.iter().all(|&v| v == 0.0) {
            return vec![Complex64::new(0.0, 0.0); modes];
        }
        let spectrum: Vec<Complex64> = (0..modes).map(|m| vals[m * nz + iz]).collect();
        let mut r = transform.inverse_slab(&spectrum);
        for (c, &x) in r.iter_mut().zip(xs) {
            *c *= x;
        }
        transform.forward_slab(&r)
    });
    Ok(SpectralField::from_parts_unchecked(
        grid.clone(),
        u.lattice().clone(),
        slabs_to_modes(&slabs, modes, nz),
    ))
}

fn add_fields(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x + y).collect();
    SpectralField::from_parts_unchecked(a.grid().clone(), a.lattice().clone(), values)
}

/// One application of the Born map `Ũ ↦ Ũ0 + ω²∫Ĝ·F[ξ·F⁻¹[Ũ]]dz'`.
pub fn born_map(
    u: &SpectralField,
    u0: &SpectralField,
    kernel_xx: &GreenKernelTable,
    xi: &RealField,
    transform: &SpectralTransform,
) -> Result<SpectralField> {
    let v = contrast_source(u, xi, transform)?;
    let scattered = apply_kernel(kernel_xx, &v, u.grid())?;
    Ok(add_fields(u0, &scattered))
}

/// Iterates the Born map from `Ũ0` until the relative update drops below
/// `opts.tol`.
///
/// Returns [`Error::Divergence`] if the update norm grows for
/// [`DIVERGENCE_WINDOW`] consecutive iterations.
pub fn born_iterate(
    u0: &SpectralField,
    kernel_xx: &GreenKernelTable,
    xi: &RealField,
    transform: &SpectralTransform,
    opts: BornOptions,
) -> Result<BornResult> {
    let u0_norm = u0.norm();
    let mut current = u0.clone();
    let mut history = Vec::new();
    let mut growth = 0usize;
    for n in 1..=opts.max_iter {
        let next = born_map(&current, u0, kernel_xx, xi, transform)?;
        let update = next.distance(&current);
        let rel = if u0_norm > 0.0 { update / u0_norm } else { update };
        if !rel.is_finite() {
            return Err(Error::Divergence {
                iteration: n,
                residual: rel,
            });
        }
        if let Some(&prev) = history.last() {
            if rel > prev {
                growth += 1;
                if growth >= DIVERGENCE_WINDOW {
                    return Err(Error::Divergence {
                        iteration: n,
                        residual: rel,
                    });
                }
            } else {
                growth = 0;
            }
        }
        history.push(rel);
        current = next;
        if update <= opts.tol * u0_norm {
            return Ok(BornResult {
                u_nu: current,
                iterations: n,
                residual_history: history,
                converged: true,
            });
        }
    }
    Ok(BornResult {
        u_nu: current,
        iterations: opts.max_iter,
        residual_history: history,
        converged: false,
    })
}

/// `‖Born map(Ũ) − Ũ‖ / ‖Ũ0‖`, the fixed-point defect of `u`.
pub fn fixed_point_defect(
    u: &SpectralField,
    u0: &SpectralField,
    kernel_xx: &GreenKernelTable,
    xi: &RealField,
    transform: &SpectralTransform,
) -> Result<f64> {
    let mapped = born_map(u, u0, kernel_xx, xi, transform)?;
    let norm = u0.norm();
    let d = mapped.distance(u);
    Ok(if norm > 0.0 { d / norm } else { d })
}

/// Receiver data from a known contrast source: `W̃ = ω²∫Ĝ(z − z')Ṽ(z')dz'`
/// on the receiver grid, together with `W = F⁻¹[W̃]`.
pub fn scattered_from_source(
    v: &SpectralField,
    kernel_xy: &GreenKernelTable,
    receivers: &Grid3D,
    transform: &SpectralTransform,
) -> Result<(SpectralField, ComplexField)> {
    let w_spec = apply_kernel(kernel_xy, v, receivers)?;
    let w_field = transform.inverse_xy(&w_spec);
    Ok((w_spec, w_field))
}

/// Receiver data from the internal field: forms `Ṽν = F[ξ·F⁻¹[Ũν]]` first.
pub fn scattered_data(
    u_nu: &SpectralField,
    xi: &RealField,
    kernel_xy: &GreenKernelTable,
    receivers: &Grid3D,
    transform: &SpectralTransform,
) -> Result<(SpectralField, ComplexField)> {
    let v = contrast_source(u_nu, xi, transform)?;
    scattered_from_source(&v, kernel_xy, receivers, transform)
}

/// Born iteration followed by data synthesis on the receiver grid.
pub fn solve_forward(
    u0: &SpectralField,
    xi: &RealField,
    kernel_xx: &GreenKernelTable,
    kernel_xy: &GreenKernelTable,
    receivers: &Grid3D,
    transform: &SpectralTransform,
    opts: BornOptions,
) -> Result<ForwardResult> {
    let born = born_iterate(u0, kernel_xx, xi, transform, opts)?;
    let (w_spec, w_field) = scattered_data(&born.u_nu, xi, kernel_xy, receivers, transform)?;
    Ok(ForwardResult {
        u_nu: born.u_nu,
        w_spec,
        w_field,
        iterations: born.iterations,
        residual_history: born.residual_history,
        converged: born.converged,
    })
}

/// Adds zero-mean complex Gaussian noise scaled so that
/// `‖W_δ − W‖ = δ·‖W‖` in the discrete `L2` norm.
///
/// Real and imaginary parts are independent. `δ = 0` returns `W` unchanged.
pub fn add_noise(w: &ComplexField, delta: f64, seed: u64) -> Result<ComplexField> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("noise level must be >= 0, got {delta}")));
    }
    let w_norm = l2_norm(w);
    if delta == 0.0 || w_norm == 0.0 {
        return Ok(w.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Complex64> = (0..w.values().len())
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect();
    let noise_field = ComplexField::from_parts_unchecked(w.grid().clone(), noise);
    let scale = delta * w_norm / l2_norm(&noise_field);
    let values = w
        .values()
        .iter()
        .zip(noise_field.values())
        .map(|(a, e)| a + e * scale)
        .collect();
    ComplexField::new(w.grid().clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grids, GridConfig};
    use crate::physics::{build_green_kernel, incident_field_spectral, Phantom, SourceSet};

    struct Setup {
        x: Grid3D,
        y: Grid3D,
        t: SpectralTransform,
        u0: SpectralField,
        xx: GreenKernelTable,
        xy: GreenKernelTable,
    }

    fn setup(omega: f64) -> Setup {
        let (x, y) = make_grids(&GridConfig::thick_layer(32, 9, 5)).unwrap();
        let t = SpectralTransform::new(&x);
        let u0 = incident_field_spectral(&SourceSet::line_array(), &x, omega, &t).unwrap();
        let xx = build_green_kernel(&x, &x, omega, &t).unwrap();
        let xy = build_green_kernel(&x, &y, omega, &t).unwrap();
        Setup { x, y, t, u0, xx, xy }
    }

    #[test]
    fn no_scatterer_converges_in_one_step() {
        let s = setup(2.0);
        let xi = RealField::zeros(s.x.clone());
        let r = born_iterate(&s.u0, &s.xx, &xi, &s.t, BornOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert_eq!(r.u_nu.values(), s.u0.values());
    }

    #[test]
    fn converged_field_is_a_fixed_point() {
        let s = setup(1.0);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let opts = BornOptions::default();
        let r = born_iterate(&s.u0, &s.xx, &xi, &s.t, opts).unwrap();
        assert!(r.converged);
        let defect = fixed_point_defect(&r.u_nu, &s.u0, &s.xx, &xi, &s.t).unwrap();
        assert!(defect <= 10.0 * opts.tol, "defect {defect}");
        assert!(r.residual_history.last().unwrap() <= &opts.tol);
    }

    #[test]
    fn small_frequency_contracts_geometrically() {
        let s = setup(0.1);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let r = born_iterate(&s.u0, &s.xx, &xi, &s.t, BornOptions::default()).unwrap();
        let h = &r.residual_history;
        assert!(h.len() >= 3);
        // ratios of successive updates stay near a constant contraction factor
        let ratios: Vec<f64> = h.windows(2).map(|w| w[1] / w[0]).collect();
        let early: Vec<f64> = ratios.iter().copied().take(ratios.len().min(3)).collect();
        for r in &early {
            assert!(*r < 0.1, "ratio {r}");
        }
        if early.len() >= 2 {
            let spread = early.iter().copied().fold(0.0, f64::max) / early.iter().copied().fold(f64::MAX, f64::min);
            assert!(spread < 3.0, "ratios {early:?}");
        }
    }

    #[test]
    fn residuals_decrease_in_contraction_regime() {
        let s = setup(1.0);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let r = born_iterate(&s.u0, &s.xx, &xi, &s.t, BornOptions::default()).unwrap();
        for w in r.residual_history.windows(2).skip(1) {
            assert!(w[1] < w[0], "{:?}", r.residual_history);
        }
    }

    #[test]
    fn zero_source_gives_zero_data() {
        let s = setup(2.0);
        let v = SpectralField::zeros(s.x.clone(), s.t.lattice().clone());
        let (ws, wf) = scattered_from_source(&v, &s.xy, &s.y, &s.t).unwrap();
        assert!(ws.values().iter().all(|c| c.norm() == 0.0));
        assert!(wf.values().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn delta_source_returns_kernel_column() {
        let s = setup(2.0);
        let nz = s.x.nz();
        let lat = s.t.lattice().clone();
        let l = 3;
        let mut vals = vec![Complex64::new(0.0, 0.0); s.x.len()];
        for m in 0..lat.len() {
            vals[m * nz + l] = Complex64::new(1.0, 0.0);
        }
        let v = SpectralField::new(s.x.clone(), lat.clone(), vals).unwrap();
        let w = apply_kernel(&s.xy, &v, &s.y).unwrap();
        let mu = s.x.trapezoid_weights()[l];
        for m in 0..lat.len() {
            for k in 0..s.y.nz() {
                let want = s.xy.entry(m, k, l) * mu * 4.0;
                assert_eq!(w.mode(m)[k], want);
            }
        }
    }

    #[test]
    fn scattered_data_is_linear() {
        let s = setup(2.0);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let v1 = contrast_source(&s.u0, &xi, &s.t).unwrap();
        let xi2 = Phantom::three_bumps(0.1).sample(&s.x);
        let v2 = contrast_source(&s.u0, &xi2, &s.t).unwrap();
        let (a, b) = (Complex64::new(0.7, -0.2), Complex64::new(-1.1, 0.4));
        let comb: Vec<Complex64> = v1.values().iter().zip(v2.values()).map(|(p, q)| a * p + b * q).collect();
        let vc = SpectralField::new(s.x.clone(), s.t.lattice().clone(), comb).unwrap();
        let (w1, _) = scattered_from_source(&v1, &s.xy, &s.y, &s.t).unwrap();
        let (w2, _) = scattered_from_source(&v2, &s.xy, &s.y, &s.t).unwrap();
        let (wc, _) = scattered_from_source(&vc, &s.xy, &s.y, &s.t).unwrap();
        let expect: Vec<Complex64> = w1.values().iter().zip(w2.values()).map(|(p, q)| a * p + b * q).collect();
        let num: f64 = wc.values().iter().zip(&expect).map(|(p, q)| (p - q).norm_sqr()).sum();
        let den: f64 = expect.iter().map(|q| q.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn noise_levels_and_determinism() {
        let s = setup(2.0);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let f = solve_forward(&s.u0, &xi, &s.xx, &s.xy, &s.y, &s.t, BornOptions::default()).unwrap();
        let w = &f.w_field;
        assert_eq!(add_noise(w, 0.0, 1).unwrap(), *w);
        for delta in [1e-7, 1e-5] {
            let wd = add_noise(w, delta, 42).unwrap();
            let diff: Vec<Complex64> = wd.values().iter().zip(w.values()).map(|(a, b)| a - b).collect();
            let dn = l2_norm(&ComplexField::new(w.grid().clone(), diff).unwrap());
            assert!((dn / l2_norm(w) - delta).abs() <= 1e-13, "{delta}");
            assert_eq!(wd, add_noise(w, delta, 42).unwrap());
            assert_ne!(wd, add_noise(w, delta, 43).unwrap());
        }
        assert!(add_noise(w, -1.0, 0).is_err());
    }

    #[test]
    fn w_field_is_inverse_of_w_spec() {
        let s = setup(1.0);
        let xi = Phantom::three_bumps(0.3).sample(&s.x);
        let f = solve_forward(&s.u0, &xi, &s.xx, &s.xy, &s.y, &s.t, BornOptions::default()).unwrap();
        assert_eq!(f.w_field, s.t.inverse_xy(&f.w_spec));
        assert!(f.w_field.values().iter().any(|v| v.norm() > 0.0));
    }
}
