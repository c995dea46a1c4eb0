//! End-to-end orchestration: synthesize receiver data for a phantom and
//! invert it back to `ξ`, one frequency at a time.

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField, SpectralField};
use crate::forward::{solve_forward, BornOptions, ForwardResult};
use crate::grid::{make_grids, Grid3D, GridConfig};
use crate::inverse::{extract_xi_lsq, recompute_internal_field, solve_modes, ModeSolveStats, XiEstimate};
use crate::physics::{build_green_kernel, incident_field_spectral, GreenKernelTable, Phantom, SourceSet};
use crate::regularize::RegularizerConfig;
use crate::spectral::SpectralTransform;

/// Kernels `X → X` and `X → Y` at one frequency.
#[derive(Debug, Clone)]
pub struct KernelPair {
    pub xx: GreenKernelTable,
    pub xy: GreenKernelTable,
}

impl KernelPair {
    pub fn omega(&self) -> f64 {
        self.xx.omega()
    }
}

/// Geometry, sources and transform shared by every stage.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub scatterers: Grid3D,
    pub receivers: Grid3D,
    pub sources: SourceSet,
    pub transform: SpectralTransform,
}

/// Inversion output at one frequency.
#[derive(Debug, Clone)]
pub struct FrequencyInversion {
    pub omega: f64,
    pub v_field: ComplexField,
    pub u_field: ComplexField,
    pub stats: ModeSolveStats,
}

impl Scenario {
    pub fn new(grids: &GridConfig, sources: SourceSet) -> Result<Self> {
        let (scatterers, receivers) = make_grids(grids)?;
        let transform = SpectralTransform::new(&scatterers);
        Ok(Self {
            scatterers,
            receivers,
            sources,
            transform,
        })
    }

    pub fn kernels(&self, omega: f64) -> Result<KernelPair> {
        check_omega(omega)?;
        Ok(KernelPair {
            xx: build_green_kernel(&self.scatterers, &self.scatterers, omega, &self.transform)?,
            xy: build_green_kernel(&self.scatterers, &self.receivers, omega, &self.transform)?,
        })
    }

    pub fn incident(&self, omega: f64) -> Result<SpectralField> {
        incident_field_spectral(&self.sources, &self.scatterers, omega, &self.transform)
    }

    pub fn exact_xi(&self, phantom: &Phantom) -> RealField {
        phantom.sample(&self.scatterers)
    }

    /// Born iteration for `phantom` and data on the receiver grid.
    pub fn synthesize(&self, phantom: &Phantom, kernels: &KernelPair, opts: BornOptions) -> Result<ForwardResult> {
        let u0 = self.incident(kernels.omega())?;
        let xi = self.exact_xi(phantom);
        solve_forward(&u0, &xi, &kernels.xx, &kernels.xy, &self.receivers, &self.transform, opts)
    }

    /// Recovers `V` and `u` on the scatterer grid from receiver data `w`.
    pub fn invert_frequency(
        &self,
        w: &ComplexField,
        kernels: &KernelPair,
        reg: &RegularizerConfig,
    ) -> Result<FrequencyInversion> {
        if w.grid() != &self.receivers {
            return Err(Error::ShapeMismatch("data grid does not match the receiver grid".into()));
        }
        let omega = kernels.omega();
        let w_spec = self.transform.forward_xy(w);
        let sol = solve_modes(&w_spec, &kernels.xy, &self.scatterers, reg)?;
        let u0 = self.incident(omega)?;
        let u_spec = recompute_internal_field(&sol.v_spec, &u0, &kernels.xx)?;
        Ok(FrequencyInversion {
            omega,
            v_field: self.transform.inverse_xy(&sol.v_spec),
            u_field: self.transform.inverse_xy(&u_spec),
            stats: sol.stats,
        })
    }
}

/// `ξ` from one or more per-frequency inversions.
pub fn combine(inversions: &[FrequencyInversion], eps_div: f64) -> Result<XiEstimate> {
    let v: Vec<ComplexField> = inversions.iter().map(|i| i.v_field.clone()).collect();
    let u: Vec<ComplexField> = inversions.iter().map(|i| i.u_field.clone()).collect();
    extract_xi_lsq(&v, &u, eps_div)
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {omega}")));
    }
    Ok(())
}
