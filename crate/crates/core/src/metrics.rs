//! Reconstruction accuracy, bump localization and timing-scaling diagnostics.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::RealField;
use crate::physics::Phantom;

/// Per-slice relative error `Δ(z) = ‖ξ_appr − ξ_exact‖ / ‖ξ_exact‖` in the
/// transverse `L2` norm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyCurve {
    pub z: Vec<f64>,
    pub delta: Vec<f64>,
}

impl AccuracyCurve {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Mean of `Δ` over the supported slices; `None` for an empty curve.
    pub fn mean(&self) -> Option<f64> {
        if self.delta.is_empty() {
            None
        } else {
            Some(self.delta.iter().sum::<f64>() / self.delta.len() as f64)
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "z,delta")?;
        for (z, d) in self.z.iter().zip(&self.delta) {
            writeln!(out, "{z:.17e},{d:.17e}")?;
        }
        Ok(())
    }
}

/// Slices where the exact field vanishes are left out.
pub fn slice_relative_error(xi_appr: &RealField, xi_exact: &RealField) -> Result<AccuracyCurve> {
    if xi_appr.grid() != xi_exact.grid() {
        return Err(Error::ShapeMismatch("fields live on different grids".into()));
    }
    let grid = xi_exact.grid();
    let mut curve = AccuracyCurve::default();
    for iz in 0..grid.nz() {
        let (a, e) = (xi_appr.slab(iz), xi_exact.slab(iz));
        let den: f64 = e.iter().map(|v| v * v).sum();
        if den == 0.0 {
            continue;
        }
        let num: f64 = a.iter().zip(e).map(|(p, q)| (p - q) * (p - q)).sum();
        curve.z.push(grid.z(iz));
        curve.delta.push((num / den).sqrt());
    }
    Ok(curve)
}

/// Where the reconstruction peaks near one true bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpLocation {
    pub center: [f64; 3],
    /// Node of the largest reconstructed value within the search ball.
    pub found: [f64; 3],
    pub peak_value: f64,
    /// Distance from `found` to the analytic bump centre.
    pub center_offset: f64,
    /// Distance from `found` to the node where the sampled exact `ξ` peaks
    /// in the same ball; zero for a perfect reconstruction.
    pub peak_offset: f64,
}

pub const LOCALIZATION_RADIUS: f64 = 1.0;

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn argmax_in_ball(field: &RealField, center: [f64; 3], radius: f64) -> Option<(usize, f64)> {
    let grid = field.grid();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in field.values().iter().enumerate() {
        if dist(grid.coords(i), center) > radius {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Locates the maximum of `xi_appr` within a unit ball around each bump centre.
pub fn localization_report(xi_appr: &RealField, phantom: &Phantom) -> Result<Vec<BumpLocation>> {
    let exact = phantom.sample(xi_appr.grid());
    let grid = xi_appr.grid();
    phantom
        .centers()
        .into_iter()
        .map(|center| {
            let (i, peak_value) = argmax_in_ball(xi_appr, center, LOCALIZATION_RADIUS).ok_or_else(|| {
                Error::InsufficientData(format!("no grid node within {LOCALIZATION_RADIUS} of bump at {center:?}"))
            })?;
            let (j, _) = argmax_in_ball(&exact, center, LOCALIZATION_RADIUS).expect("same grid");
            let found = grid.coords(i);
            Ok(BumpLocation {
                center,
                found,
                peak_value,
                center_offset: dist(found, center),
                peak_offset: dist(found, grid.coords(j)),
            })
        })
        .collect()
}

pub fn write_localization_csv<W: Write>(rows: &[BumpLocation], mut out: W) -> Result<()> {
    writeln!(out, "cx,cy,cz,fx,fy,fz,peak,center_offset,peak_offset")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{:.17e},{:.17e},{:.17e}",
            r.center[0], r.center[1], r.center[2], r.found[0], r.found[1], r.found[2], r.peak_value, r.center_offset, r.peak_offset
        )?;
    }
    Ok(())
}

/// Wall time of one full inversion at transverse size `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRecord {
    pub n: usize,
    pub m: usize,
    pub m1: usize,
    pub seconds: f64,
}

/// Least-squares fit of `t = t0·N^p` in log–log coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingFit {
    pub exponent: f64,
    pub t0: f64,
}

pub fn timing_fit(records: &[TimingRecord]) -> Result<TimingFit> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "timing fit needs at least two records, got {}",
            records.len()
        )));
    }
    if records.iter().any(|r| !(r.seconds > 0.0) || r.n == 0) {
        return Err(Error::InvalidParameter("timing records need positive N and t".into()));
    }
    let pts: Vec<(f64, f64)> = records.iter().map(|r| ((r.n as f64).ln(), r.seconds.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("timing records need at least two distinct N".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    Ok(TimingFit {
        exponent,
        t0: (my - exponent * mx).exp(),
    })
}

pub fn write_timing_csv<W: Write>(records: &[TimingRecord], fit: Option<TimingFit>, mut out: W) -> Result<()> {
    writeln!(out, "n,m,m1,seconds,t0")?;
    for r in records {
        let t0 = fit.map(|f| f.t0).unwrap_or(f64::NAN);
        writeln!(out, "{},{},{},{:.6e},{:.6e}", r.n, r.m, r.m1, r.seconds, t0)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grids, Grid3D, GridConfig};

    fn grid() -> Grid3D {
        make_grids(&GridConfig::thick_layer(64, 31, 3)).unwrap().0
    }

    #[test]
    fn identical_fields_have_zero_error() {
        let x = grid();
        let xi = Phantom::three_bumps(0.3).sample(&x);
        let c = slice_relative_error(&xi, &xi).unwrap();
        assert!(!c.is_empty());
        assert!(c.delta.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn zero_reconstruction_has_unit_error() {
        let x = grid();
        let xi = Phantom::three_bumps(0.3).sample(&x);
        let c = slice_relative_error(&RealField::zeros(x), &xi).unwrap();
        assert!(c.delta.iter().all(|&d| d == 1.0));
        assert_eq!(c.mean(), Some(1.0));
    }

    #[test]
    fn scaled_reconstruction() {
        let x = grid();
        let xi = Phantom::three_bumps(0.3).sample(&x);
        let scaled = RealField::new(x, xi.values().iter().map(|v| 1.1 * v).collect()).unwrap();
        let c = slice_relative_error(&scaled, &xi).unwrap();
        assert!(c.delta.iter().all(|&d| (d - 0.1).abs() < 1e-13));
    }

    #[test]
    fn unsupported_slices_are_skipped() {
        let x = grid();
        let xi = Phantom::three_bumps(0.3).sample(&x);
        let c = slice_relative_error(&xi, &xi).unwrap();
        assert!(c.len() < x.nz());
        assert!(c.z.iter().all(|&z| z > -0.5 && z < 1.5));
        let empty = slice_relative_error(&xi, &RealField::zeros(x)).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.mean(), None);
    }

    #[test]
    fn exact_field_localizes_with_zero_peak_offset() {
        let x = grid();
        let p = Phantom::three_bumps(0.3);
        let rep = localization_report(&p.sample(&x), &p).unwrap();
        assert_eq!(rep.len(), 3);
        for r in &rep {
            assert_eq!(r.peak_offset, 0.0);
            assert!(r.center_offset <= 0.5 * (x.hx().powi(2) * 2.0 + x.hz().powi(2)).sqrt() + 1e-12);
        }
    }

    #[test]
    fn one_cell_shift_gives_offset_hx() {
        let x = grid();
        let p = Phantom::three_bumps(0.3);
        let exact = p.sample(&x);
        let n = x.n();
        let mut shifted = vec![0.0; x.len()];
        for iz in 0..x.nz() {
            for iy in 0..n {
                for ix in 1..n {
                    shifted[x.index(ix, iy, iz)] = exact.values()[x.index(ix - 1, iy, iz)];
                }
            }
        }
        let rep = localization_report(&RealField::new(x.clone(), shifted).unwrap(), &p).unwrap();
        for r in &rep {
            assert!((r.peak_offset - x.hx()).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_timings() {
        let recs: Vec<TimingRecord> = [32, 64, 128]
            .iter()
            .map(|&n| TimingRecord {
                n,
                m: 51,
                m1: 51,
                seconds: 3e-4 * (n * n) as f64,
            })
            .collect();
        let fit = timing_fit(&recs).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-12);
        assert!((fit.t0 - 3e-4).abs() < 1e-15);
        assert!(timing_fit(&recs[..1]).is_err());
        assert!(timing_fit(&[]).is_err());
    }

    #[test]
    fn csv_headers() {
        let x = grid();
        let xi = Phantom::three_bumps(0.3).sample(&x);
        let mut buf = Vec::new();
        slice_relative_error(&xi, &xi).unwrap().write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("z,delta\n"));
    }
}
