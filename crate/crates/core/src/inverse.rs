//! Inverse problem: recover the contrast source `Ṽ` mode by mode from
//! receiver-layer data, rebuild the internal field, and extract `ξ` from
//! `u·ξ = V`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::field::{ComplexField, RealField, SpectralField};
use crate::forward::apply_kernel;
use crate::grid::Grid3D;
use crate::physics::GreenKernelTable;
use crate::regularize::{
    choose_truncation, orbit_matrix, CVector, Method, RegularizerConfig, Selection, SvdFactor,
    TruncationPolicy,
};

/// Default relative floor on `|u|` below which `ξ` is masked to zero.
pub const DEFAULT_EPS_DIV: f64 = 1e-3;

/// Upper bound on the Tikhonov `α` searched by the discrepancy rule, in units of `σ_ref²`.
const TIKHONOV_ALPHA_MAX: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct ModeSolveStats {
    /// Largest singular value over all modes; thresholds are relative to it.
    pub sigma_ref: f64,
    /// Retained rank per mode (effective rank `#{σ² ≥ α}` for Tikhonov).
    pub ranks: Vec<usize>,
    /// Modes whose residual target could not be met.
    pub unsatisfied: usize,
    /// Modes whose solve produced non-finite values and were zeroed.
    pub failed: usize,
    /// Per-mode residual target used by the discrepancy rule, if any.
    pub residual_target: Option<f64>,
}

impl ModeSolveStats {
    /// Histogram `h[r]` = number of modes with retained rank `r`.
    pub fn rank_histogram(&self) -> Vec<usize> {
        let max = self.ranks.iter().copied().max().unwrap_or(0);
        let mut h = vec![0; max + 1];
        for &r in &self.ranks {
            h[r] += 1;
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub v_spec: SpectralField,
    pub stats: ModeSolveStats,
}

/// Solves `ω² ∫ Ĝ(z − z') Ṽ(z') dz' = W̃(z)` for every mode.
///
/// Modes in one lattice orbit share a matrix, so each orbit is factorized
/// once. Truncation thresholds and Tikhonov penalties are scaled by the
/// largest singular value over all modes, `σ_ref`, so modes whose kernel has
/// decayed below the noise floor are dropped rather than amplified.
pub fn solve_modes(
    w_spec: &SpectralField,
    kernel_xy: &GreenKernelTable,
    scatterers: &Grid3D,
    reg: &RegularizerConfig,
) -> Result<ModeSolution> {
    reg.validate()?;
    if kernel_xy.rows() != w_spec.nz() || kernel_xy.cols() != scatterers.nz() {
        return Err(Error::ShapeMismatch(format!(
            "kernel is {}x{}, data has {} planes and unknowns {} planes",
            kernel_xy.rows(),
            kernel_xy.cols(),
            w_spec.nz(),
            scatterers.nz()
        )));
    }
    if kernel_xy.lattice().len() != w_spec.lattice().len() || !scatterers.same_lattice(w_spec.grid())
    {
        return Err(Error::ShapeMismatch("kernel lattice does not match data".into()));
    }
    let lattice = kernel_xy.lattice().clone();
    let omega = kernel_xy.omega();
    let weights = scatterers.trapezoid_weights();
    let n_orbits = lattice.n_orbits();
    let cols = kernel_xy.cols();

    let sigma_max: Vec<f64> = exec::map_range(n_orbits, |o| {
        let a = orbit_matrix(kernel_xy, o, omega, &weights).expect("validated shapes");
        a.singular_values().iter().copied().fold(0.0, f64::max)
    });
    let sigma_ref = sigma_max.iter().copied().fold(0.0, f64::max);

    let residual_target = match reg.selection {
        Selection::Fixed => None,
        Selection::Discrepancy { delta } => {
            // White noise spreads its energy evenly over the N² modes.
            Some(reg.discrepancy_safety * delta * w_spec.norm() / (lattice.len() as f64).sqrt())
        }
    };
    let floor = reg.tsvd_threshold * sigma_ref;
    let alpha_fixed = reg.tikhonov_alpha * sigma_ref * sigma_ref;

    struct ModeOut {
        mode: usize,
        x: Vec<Complex64>,
        rank: usize,
        satisfied: bool,
        failed: bool,
    }

    let per_orbit: Vec<Vec<ModeOut>> = exec::map_range(n_orbits, |o| {
        let members = lattice.orbit_members(o);
        if sigma_ref == 0.0 || sigma_max[o] < floor {
            return members
                .iter()
                .map(|&m| ModeOut {
                    mode: m,
                    x: vec![Complex64::new(0.0, 0.0); cols],
                    rank: 0,
                    satisfied: true,
                    failed: false,
                })
                .collect();
        }
        let a = orbit_matrix(kernel_xy, o, omega, &weights).expect("validated shapes");
        let f = SvdFactor::new(&a);
        let fixed_rank = f.count_above(floor);
        members
            .iter()
            .map(|&m| {
                let b = CVector::from_column_slice(w_spec.mode(m));
                let coeffs = f.coefficients(&b);
                let (x, rank, satisfied) = match reg.method {
                    Method::Tsvd => {
                        let (rank, satisfied) = match residual_target {
                            None => (fixed_rank, true),
                            Some(target) => {
                                let perp = f.perpendicular_norm(&b, &coeffs);
                                let t = choose_truncation(
                                    f.singular_values(),
                                    &coeffs,
                                    perp,
                                    TruncationPolicy::ResidualBound { target },
                                );
                                (t.rank.min(fixed_rank), t.satisfied)
                            }
                        };
                        (f.solve_rank(&coeffs, rank), rank, satisfied)
                    }
                    Method::Tikhonov => {
                        let (alpha, satisfied) = match residual_target {
                            None => (alpha_fixed, true),
                            Some(target) => {
                                let perp = f.perpendicular_norm(&b, &coeffs);
                                let hi = TIKHONOV_ALPHA_MAX * sigma_ref * sigma_ref;
                                let alpha = f.tikhonov_alpha_for_residual(
                                    &coeffs,
                                    perp,
                                    target,
                                    alpha_fixed,
                                    hi.max(alpha_fixed),
                                );
                                let ok = f.tikhonov_residual(&coeffs, perp, alpha) <= target;
                                (alpha, ok)
                            }
                        };
                        let rank = f.singular_values().iter().filter(|&&s| s * s >= alpha).count();
                        (f.solve_tikhonov(&coeffs, alpha), rank, satisfied)
                    }
                };
                let failed = x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite());
                let x = if failed {
                    vec![Complex64::new(0.0, 0.0); cols]
                } else {
                    x.iter().copied().collect()
                };
                ModeOut {
                    mode: m,
                    x,
                    rank: if failed { 0 } else { rank },
                    satisfied,
                    failed,
                }
            })
            .collect()
    });

    let mut values = vec![Complex64::new(0.0, 0.0); lattice.len() * cols];
    let mut ranks = vec![0usize; lattice.len()];
    let (mut unsatisfied, mut failed) = (0, 0);
    for out in per_orbit.into_iter().flatten() {
        values[out.mode * cols..(out.mode + 1) * cols].copy_from_slice(&out.x);
        ranks[out.mode] = out.rank;
        unsatisfied += usize::from(!out.satisfied);
        failed += usize::from(out.failed);
    }
    Ok(ModeSolution {
        v_spec: SpectralField::from_parts_unchecked(scatterers.clone(), lattice, values),
        stats: ModeSolveStats {
            sigma_ref,
            ranks,
            unsatisfied,
            failed,
            residual_target,
        },
    })
}

/// `Ũ = Ũ0 + ω² ∫ Ĝ(z − z') Ṽ(z') dz'` on the scatterer grid.
pub fn recompute_internal_field(
    v_spec: &SpectralField,
    u0: &SpectralField,
    kernel_xx: &GreenKernelTable,
) -> Result<SpectralField> {
    if !v_spec.same_shape(u0) {
        return Err(Error::ShapeMismatch("contrast source and incident field differ in shape".into()));
    }
    let scattered = apply_kernel(kernel_xx, v_spec, u0.grid())?;
    let values = u0
        .values()
        .iter()
        .zip(scattered.values())
        .map(|(a, b)| a + b)
        .collect();
    SpectralField::new(u0.grid().clone(), u0.lattice().clone(), values)
}

/// `ξ` recovered from `u·ξ = V`, with diagnostics.
#[derive(Debug, Clone)]
pub struct XiEstimate {
    pub xi: RealField,
    /// `L2` norm of the discarded imaginary part over unmasked nodes.
    pub imag_norm: f64,
    /// Fraction of nodes masked because `|u|` was too small.
    pub masked_fraction: f64,
}

/// Pointwise `ξ = Re(V/u)` where `|u| ≥ eps_div·max|u|`, else `0`.
pub fn extract_xi_single(v: &ComplexField, u: &ComplexField, eps_div: f64) -> Result<XiEstimate> {
    extract_xi_lsq(std::slice::from_ref(v), std::slice::from_ref(u), eps_div)
}

/// Least squares over frequencies: `ξ = Re(Σ ū·V) / Σ |u|²`, minimizing
/// `Σ_ω |u·ξ − V|²` over real `ξ`.
///
/// Nodes where `Σ|u|² < eps_div²·max Σ|u|²` are set to zero.
pub fn extract_xi_lsq(v_set: &[ComplexField], u_set: &[ComplexField], eps_div: f64) -> Result<XiEstimate> {
    if v_set.is_empty() || v_set.len() != u_set.len() {
        return Err(Error::InsufficientData(format!(
            "need matching non-empty V and u sets, got {} and {}",
            v_set.len(),
            u_set.len()
        )));
    }
    let grid = v_set[0].grid();
    if v_set.iter().chain(u_set).any(|f| f.grid() != grid) {
        return Err(Error::ShapeMismatch("all fields must share the scatterer grid".into()));
    }
    let n = grid.len();
    let mut num = vec![Complex64::new(0.0, 0.0); n];
    let mut den = vec![0.0f64; n];
    for (v, u) in v_set.iter().zip(u_set) {
        for i in 0..n {
            let uu = u.values()[i];
            num[i] += uu.conj() * v.values()[i];
            den[i] += uu.norm_sqr();
        }
    }
    let max_den = den.iter().copied().fold(0.0, f64::max);
    let cutoff = eps_div * eps_div * max_den;
    let mut xi = vec![0.0; n];
    let mut imag_sq = 0.0;
    let mut masked = 0usize;
    for i in 0..n {
        if den[i] > 0.0 && den[i] >= cutoff {
            let q = num[i] / den[i];
            if q.re.is_finite() && q.im.is_finite() {
                xi[i] = q.re;
                imag_sq += q.im * q.im;
                continue;
            }
        }
        masked += 1;
    }
    Ok(XiEstimate {
        xi: RealField::from_parts_unchecked(grid.clone(), xi),
        imag_norm: (imag_sq * grid.cell_volume()).sqrt(),
        masked_fraction: masked as f64 / n as f64,
    })
}
