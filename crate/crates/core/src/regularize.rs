//! Per-mode first-kind systems `A x = b` and their regularized solution.
//!
//! Each transverse mode `Ω^(m)` gives a dense system with one row per
//! receiver node and one column per scatterer node,
//! `A_kl = ω²·μ_l·Ĝ(z_k − z'_l, ω, Ω^(m))`. These are severely
//! ill-conditioned, so they are solved by truncated SVD or Tikhonov
//! regularization, both of which return the minimal-norm (normal) solution.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physics::GreenKernelTable;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tsvd,
    Tikhonov,
}

/// How the regularization strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum Selection {
    /// Use the configured threshold or `α` as is.
    Fixed,
    /// Pick the weakest regularization whose residual meets the noise level.
    Discrepancy { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub method: Method,
    /// TSVD keeps singular values `σ ≥ τ·σ_ref`.
    pub tsvd_threshold: f64,
    /// Tikhonov penalty, in units of `σ_ref²`.
    pub tikhonov_alpha: f64,
    pub selection: Selection,
    /// Residual target multiplier for the discrepancy principle.
    #[serde(default = "default_safety")]
    pub discrepancy_safety: f64,
}

fn default_safety() -> f64 {
    1.5
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Tsvd,
            tsvd_threshold: 1e-7,
            tikhonov_alpha: 1e-14,
            selection: Selection::Fixed,
            discrepancy_safety: default_safety(),
        }
    }
}

impl RegularizerConfig {
    /// Fixed threshold for exact data, discrepancy principle otherwise.
    pub fn for_noise_level(delta: f64) -> Self {
        let selection = if delta > 0.0 {
            Selection::Discrepancy { delta }
        } else {
            Selection::Fixed
        };
        Self {
            selection,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tsvd_threshold > 0.0 && self.tsvd_threshold <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "TSVD threshold must lie in (0, 1], got {}",
                self.tsvd_threshold
            )));
        }
        if !(self.tikhonov_alpha > 0.0) || !self.tikhonov_alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Tikhonov alpha must be > 0, got {}",
                self.tikhonov_alpha
            )));
        }
        if let Selection::Discrepancy { delta } = self.selection {
            if !(delta > 0.0) || !delta.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "discrepancy policy needs a positive noise level, got {delta}"
                )));
            }
        }
        if !(self.discrepancy_safety >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discrepancy safety factor must be >= 1, got {}",
                self.discrepancy_safety
            )));
        }
        Ok(())
    }
}

/// Discretized first-kind equation for one transverse mode.
#[derive(Debug, Clone)]
pub struct ModeSystem {
    pub a: CMatrix,
    pub b: Option<CVector>,
    pub mode: usize,
    pub omega: f64,
}

impl ModeSystem {
    pub fn with_rhs(mut self, b: CVector) -> Result<Self> {
        if b.len() != self.a.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "rhs has {} entries, system has {} rows",
                b.len(),
                self.a.nrows()
            )));
        }
        self.b = Some(b);
        Ok(self)
    }
}

/// Matrix `ω²·μ_l·Ĝ(z_k − z'_l)` of one lattice orbit.
pub fn orbit_matrix(
    kernel: &GreenKernelTable,
    orbit: usize,
    omega: f64,
    weights: &[f64],
) -> Result<CMatrix> {
    let (rows, cols) = (kernel.rows(), kernel.cols());
    if weights.len() != cols {
        return Err(Error::ShapeMismatch(format!(
            "{} quadrature weights for {} scatterer nodes",
            weights.len(),
            cols
        )));
    }
    if orbit >= kernel.lattice().n_orbits() {
        return Err(Error::ShapeMismatch(format!("orbit {orbit} out of range")));
    }
    let vals = kernel.orbit_values(orbit);
    let index = kernel.offset_index();
    let w2 = omega * omega;
    Ok(CMatrix::from_fn(rows, cols, |k, l| {
        vals[index[k * cols + l] as usize] * (w2 * weights[l])
    }))
}

/// Assembles `A^(m)` for mode `m`, with rows indexed by receiver nodes.
///
/// `omega` is the prefactor frequency; normally `kernel.omega()`.
pub fn assemble_mode_system(
    kernel: &GreenKernelTable,
    mode: usize,
    omega: f64,
    weights: &[f64],
) -> Result<ModeSystem> {
    if mode >= kernel.lattice().len() {
        return Err(Error::ShapeMismatch(format!("mode {mode} out of range")));
    }
    let a = orbit_matrix(kernel, kernel.lattice().orbit_of(mode), omega, weights)?;
    Ok(ModeSystem {
        a,
        b: None,
        mode,
        omega,
    })
}

/// Which singular triplets a TSVD solve keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cutoff {
    /// `σ_i ≥ τ·σ_max` of this matrix.
    Relative(f64),
    /// `σ_i ≥` the given value.
    Absolute(f64),
    /// The leading `k` triplets.
    Rank(usize),
}

/// Rule for [`choose_truncation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TruncationPolicy {
    /// `σ_i ≥ τ·σ_max`.
    Fixed { tau: f64 },
    /// Smallest rank with `‖A x_k − b‖ ≤ δ·‖b‖`.
    Discrepancy { delta: f64 },
    /// Smallest rank with `‖A x_k − b‖ ≤ target`.
    ResidualBound { target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub rank: usize,
    /// False when the residual target could not be met at any rank.
    pub satisfied: bool,
}

/// Thin SVD `A = U Σ Vᴴ` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct SvdFactor {
    u: CMatrix,
    s: Vec<f64>,
    v: CMatrix,
}

impl SvdFactor {
    pub fn new(a: &CMatrix) -> Self {
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        let s_raw: Vec<f64> = svd.singular_values.iter().copied().collect();
        let mut order: Vec<usize> = (0..s_raw.len()).collect();
        order.sort_by(|&i, &j| s_raw[j].total_cmp(&s_raw[i]));
        let s = order.iter().map(|&i| s_raw[i]).collect();
        let u = CMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
        let v = CMatrix::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)].conj());
        Self { u, s, v }
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// `c_i = u_iᴴ b`.
    pub fn coefficients(&self, b: &CVector) -> Vec<Complex64> {
        (0..self.s.len())
            .map(|i| self.u.column(i).dotc(b))
            .collect()
    }

    /// `‖b − U Uᴴ b‖`, the part of `b` no solution can fit.
    pub fn perpendicular_norm(&self, b: &CVector, coeffs: &[Complex64]) -> f64 {
        let mut r = b.clone();
        for (i, c) in coeffs.iter().enumerate() {
            r.axpy(-*c, &self.u.column(i), Complex64::new(1.0, 0.0));
        }
        r.norm()
    }

    pub fn rank_for(&self, cutoff: Cutoff) -> usize {
        match cutoff {
            Cutoff::Rank(k) => k.min(self.s.len()),
            Cutoff::Relative(tau) => self.count_above(tau * self.sigma_max()),
            Cutoff::Absolute(floor) => self.count_above(floor),
        }
    }

    /// Number of positive singular values `≥ floor`.
    pub fn count_above(&self, floor: f64) -> usize {
        self.s.iter().take_while(|&&s| s > 0.0 && s >= floor).count()
    }

    /// `Σ_{i<k} (c_i/σ_i) v_i`.
    pub fn solve_rank(&self, coeffs: &[Complex64], rank: usize) -> CVector {
        let mut x = CVector::zeros(self.ncols());
        for i in 0..rank.min(self.s.len()) {
            if self.s[i] > 0.0 {
                x.axpy(coeffs[i] / self.s[i], &self.v.column(i), Complex64::new(1.0, 0.0));
            }
        }
        x
    }

    /// `Σ σ_i/(σ_i² + α)·c_i·v_i`, the Tikhonov solution.
    pub fn solve_tikhonov(&self, coeffs: &[Complex64], alpha: f64) -> CVector {
        let mut x = CVector::zeros(self.ncols());
        for (i, &s) in self.s.iter().enumerate() {
            let f = s / (s * s + alpha);
            if f != 0.0 {
                x.axpy(coeffs[i] * f, &self.v.column(i), Complex64::new(1.0, 0.0));
            }
        }
        x
    }

    /// Tikhonov residual `‖A x_α − b‖`.
    pub fn tikhonov_residual(&self, coeffs: &[Complex64], perp: f64, alpha: f64) -> f64 {
        let tail: f64 = self
            .s
            .iter()
            .zip(coeffs)
            .map(|(&s, c)| (alpha / (s * s + alpha)).powi(2) * c.norm_sqr())
            .sum();
        (perp * perp + tail).sqrt()
    }

    /// Largest `α` in `[lo, hi]` whose Tikhonov residual stays within `target`,
    /// found by bisection in `log α`.
    pub fn tikhonov_alpha_for_residual(
        &self,
        coeffs: &[Complex64],
        perp: f64,
        target: f64,
        lo: f64,
        hi: f64,
    ) -> f64 {
        if self.tikhonov_residual(coeffs, perp, hi) <= target {
            return hi;
        }
        if self.tikhonov_residual(coeffs, perp, lo) > target {
            return lo;
        }
        let (mut a, mut b) = (lo.ln(), hi.ln());
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if self.tikhonov_residual(coeffs, perp, mid.exp()) <= target {
                a = mid;
            } else {
                b = mid;
            }
            if b - a < 1e-6 {
                break;
            }
        }
        a.exp()
    }
}

#[derive(Debug, Clone)]
pub struct TsvdSolution {
    pub x: CVector,
    pub rank: usize,
    pub singular_values: Vec<f64>,
}

fn check_rhs(a: &CMatrix, b: &CVector) -> Result<()> {
    if b.len() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "rhs has {} entries, matrix has {} rows",
            b.len(),
            a.nrows()
        )));
    }
    Ok(())
}

/// Truncated-SVD minimal-norm solution `x = Σ_{kept} (u_iᴴb/σ_i) v_i`.
///
/// When no singular value survives the cutoff the result is the zero vector
/// with `rank == 0`.
pub fn tsvd_solve(a: &CMatrix, b: &CVector, cutoff: Cutoff) -> Result<TsvdSolution> {
    check_rhs(a, b)?;
    let f = SvdFactor::new(a);
    let rank = f.rank_for(cutoff);
    let coeffs = f.coefficients(b);
    Ok(TsvdSolution {
        x: f.solve_rank(&coeffs, rank),
        rank,
        singular_values: f.s,
    })
}

/// Solves `(AᴴA + αI) x = Aᴴ b`.
pub fn tikhonov_solve(a: &CMatrix, b: &CVector, alpha: f64) -> Result<CVector> {
    check_rhs(a, b)?;
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("Tikhonov alpha must be > 0, got {alpha}")));
    }
    let f = SvdFactor::new(a);
    let coeffs = f.coefficients(b);
    Ok(f.solve_tikhonov(&coeffs, alpha))
}

/// Picks the TSVD rank from a descending spectrum and the projections
/// `c_i = u_iᴴ b`.
///
/// `perp_norm` is the norm of the component of `b` outside the range of `U`;
/// the rank-`k` residual is `√(perp² + Σ_{i≥k} |c_i|²)`.
pub fn choose_truncation(
    spectrum: &[f64],
    coeffs: &[Complex64],
    perp_norm: f64,
    policy: TruncationPolicy,
) -> Truncation {
    debug_assert!(spectrum.windows(2).all(|w| w[0] >= w[1]), "spectrum not sorted");
    let smax = spectrum.first().copied().unwrap_or(0.0);
    let target = match policy {
        TruncationPolicy::Fixed { tau } => {
            let rank = spectrum.iter().take_while(|&&s| s > 0.0 && s >= tau * smax).count();
            return Truncation {
                rank,
                satisfied: true,
            };
        }
        TruncationPolicy::Discrepancy { delta } => {
            let b2 = perp_norm * perp_norm + coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
            delta * b2.sqrt()
        }
        TruncationPolicy::ResidualBound { target } => target,
    };
    let usable = spectrum.iter().take_while(|&&s| s > 0.0).count().min(coeffs.len());
    // tails[k] = Σ_{i ≥ k} |c_i|² over usable components
    let mut tails = vec![0.0; usable + 1];
    for i in (0..usable).rev() {
        tails[i] = tails[i + 1] + coeffs[i].norm_sqr();
    }
    let dropped: f64 = coeffs[usable..].iter().map(|c| c.norm_sqr()).sum();
    let base = perp_norm * perp_norm + dropped;
    for (k, tail) in tails.iter().enumerate() {
        if (base + tail).sqrt() <= target {
            return Truncation {
                rank: k,
                satisfied: true,
            };
        }
    }
    Truncation {
        rank: usable,
        satisfied: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grids, GridConfig};
    use crate::physics::build_green_kernel;
    use crate::spectral::SpectralTransform;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
        CMatrix::from_fn(m, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_vector(rng: &mut ChaCha8Rng, m: usize) -> CVector {
        CVector::from_fn(m, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    /// Random matrix with orthonormal columns via QR.
    fn orthonormal(rng: &mut ChaCha8Rng, m: usize, n: usize) -> CMatrix {
        random_matrix(rng, m, n).qr().q()
    }

    #[test]
    fn toy_system_entries() {
        let mut cfg = GridConfig::thick_layer(8, 3, 2);
        cfg.receiver.count = 2;
        let (x, y) = make_grids(&cfg).unwrap();
        let t = SpectralTransform::new(&x);
        let k = build_green_kernel(&x, &y, 2.0, &t).unwrap();
        let w = x.trapezoid_weights();
        let sys = assemble_mode_system(&k, 5, 2.0, &w).unwrap();
        assert_eq!(sys.a.shape(), (2, 3));
        for r in 0..2 {
            for l in 0..3 {
                assert_eq!(sys.a[(r, l)], k.entry(5, r, l) * (4.0 * w[l]));
            }
        }
        let zero = assemble_mode_system(&k, 5, 0.0, &w).unwrap();
        assert!(zero.a.iter().all(|v| v.norm() == 0.0));
        let doubled = assemble_mode_system(&k, 5, 4.0, &w).unwrap();
        assert!((doubled.a.clone() - sys.a.clone() * c(4.0, 0.0)).norm() <= 1e-15 * sys.a.norm());
        assert!(assemble_mode_system(&k, 5, 2.0, &w[..2]).is_err());
        assert!(sys.with_rhs(CVector::zeros(3)).is_err());
    }

    #[test]
    fn identity_returns_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = random_vector(&mut rng, 5);
        let s = tsvd_solve(&CMatrix::identity(5, 5), &b, Cutoff::Relative(1e-12)).unwrap();
        assert_eq!(s.rank, 5);
        assert!((s.x - b).norm() < 1e-15);
    }

    #[test]
    fn matches_pseudo_inverse_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(&mut rng, 10, 6);
        let b = random_vector(&mut rng, 10);
        // least squares via QR, independent of the SVD path
        let qr = a.clone().qr();
        let rhs = qr.q().adjoint() * &b;
        let oracle = qr.r().solve_upper_triangular(&rhs).unwrap();
        let s = tsvd_solve(&a, &b, Cutoff::Relative(1e-14)).unwrap();
        assert_eq!(s.rank, 6);
        assert!((s.x - &oracle).norm() <= 1e-10 * oracle.norm());
    }

    #[test]
    fn rank_one_orthogonal_rhs_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthonormal(&mut rng, 4, 2);
        let (u, w) = (q.column(0).into_owned(), q.column(1).into_owned());
        let v = orthonormal(&mut rng, 3, 1).column(0).into_owned();
        let a = &u * v.adjoint() * c(2.5, 0.0);
        let s = tsvd_solve(&a, &w, Cutoff::Relative(1e-10)).unwrap();
        assert_eq!(s.rank, 1);
        assert!(s.x.norm() < 1e-15);
    }

    #[test]
    fn nothing_above_cutoff_returns_zero() {
        let a = CMatrix::from_element(3, 3, c(1e-20, 0.0));
        let b = CVector::from_element(3, c(1.0, 0.0));
        let s = tsvd_solve(&a, &b, Cutoff::Absolute(1.0)).unwrap();
        assert_eq!(s.rank, 0);
        assert!(s.x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn tikhonov_closed_form_for_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = orthonormal(&mut rng, 7, 4);
        let b = random_vector(&mut rng, 7);
        let alpha = 0.3;
        let x = tikhonov_solve(&a, &b, alpha).unwrap();
        let want = a.adjoint() * &b / c(1.0 + alpha, 0.0);
        assert!((x - want).norm() < 1e-14);
        assert!(tikhonov_solve(&a, &b, 0.0).is_err());
        assert!(tikhonov_solve(&a, &b, -1.0).is_err());
    }

    #[test]
    fn tikhonov_normal_equation_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 8, 5);
        let b = random_vector(&mut rng, 8);
        let alpha = 1e-3;
        let x = tikhonov_solve(&a, &b, alpha).unwrap();
        let ah = a.adjoint();
        let lhs = (&ah * &a) * &x + &x * c(alpha, 0.0);
        let rhs = &ah * &b;
        assert!((lhs - &rhs).norm() <= 1e-12 * rhs.norm());
    }

    #[test]
    fn tikhonov_norm_shrinks_with_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_matrix(&mut rng, 6, 6);
        let b = random_vector(&mut rng, 6);
        let mut prev = f64::INFINITY;
        for e in -6..8 {
            let n = tikhonov_solve(&a, &b, 10f64.powi(e)).unwrap().norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn truncation_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 5, 5);
        let b = random_vector(&mut rng, 5);
        let f = SvdFactor::new(&a);
        let coeffs = f.coefficients(&b);
        let perp = f.perpendicular_norm(&b, &coeffs);
        let t = choose_truncation(f.singular_values(), &coeffs, perp, TruncationPolicy::Discrepancy { delta: 1.5 });
        assert_eq!(t, Truncation { rank: 0, satisfied: true });
        let t = choose_truncation(f.singular_values(), &coeffs, perp, TruncationPolicy::Discrepancy { delta: 1e-13 });
        assert_eq!(t.rank, 5);
        assert!(t.satisfied);
        let t = choose_truncation(f.singular_values(), &coeffs, perp, TruncationPolicy::Fixed { tau: 1e-12 });
        assert_eq!(t.rank, 5);
    }

    #[test]
    fn truncation_finds_planted_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (m, n) = (8, 6);
        let u = orthonormal(&mut rng, m, n);
        let v = orthonormal(&mut rng, n, n);
        let sigma = [1.0, 0.6, 0.3, 1e-6, 1e-7, 1e-8];
        let a = &u * CMatrix::from_diagonal(&CVector::from_iterator(n, sigma.iter().map(|&s| c(s, 0.0)))) * v.adjoint();
        // signal in the leading three directions, noise of size ~1e-4 in the rest
        let mut b = CVector::zeros(m);
        for (i, amp) in [0.8, -0.5, 0.4].iter().enumerate() {
            b.axpy(c(*amp, 0.1), &u.column(i), c(1.0, 0.0));
        }
        for i in 3..n {
            b.axpy(c(1e-4, -1e-4), &u.column(i), c(1.0, 0.0));
        }
        let f = SvdFactor::new(&a);
        let coeffs = f.coefficients(&b);
        let perp = f.perpendicular_norm(&b, &coeffs);
        let t = choose_truncation(f.singular_values(), &coeffs, perp, TruncationPolicy::Discrepancy { delta: 1e-3 });
        assert_eq!(t.rank, 3);
    }

    #[test]
    fn discrepancy_alpha_meets_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 6, 4);
        let b = random_vector(&mut rng, 6);
        let f = SvdFactor::new(&a);
        let coeffs = f.coefficients(&b);
        let perp = f.perpendicular_norm(&b, &coeffs);
        let target = perp + 0.5 * (b.norm() - perp);
        let alpha = f.tikhonov_alpha_for_residual(&coeffs, perp, target, 1e-12, 1e6);
        let r = f.tikhonov_residual(&coeffs, perp, alpha);
        assert!(r <= target && r > 0.99 * target, "r={r} target={target} perp={perp} alpha={alpha}");
        let x = f.solve_tikhonov(&coeffs, alpha);
        assert!(((&a * x - &b).norm() - r).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(RegularizerConfig::default().validate().is_ok());
        assert!(RegularizerConfig::for_noise_level(1e-5).validate().is_ok());
        let mut bad = RegularizerConfig {
            selection: Selection::Discrepancy { delta: 0.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        bad = RegularizerConfig { tsvd_threshold: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        bad = RegularizerConfig { tikhonov_alpha: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
