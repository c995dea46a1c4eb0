//! On-disk formats.
//!
//! Field dumps (`LAF1`): the 4-byte magic, `u32 N`, `u32 N`, `u32 Mz`, six
//! `f64` bounds `[x_min, x_max, y_min, y_max, z_min, z_max]`, then
//! interleaved `(re, im)` `f64` pairs in `iz`-major, `iy`, `ix` order. All
//! numbers are little-endian. Real fields are stored with `im = 0`.
//!
//! Kernel caches reuse the container: the two size slots hold the orbit
//! count and `1`, `Mz` holds the number of distinct axial offsets, and the
//! bounds slots hold `[ω, N, rows, cols, min offset, max offset]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::grid::Grid3D;
use crate::physics::{offset_table, GreenKernelTable};
use crate::regularize::orbit_matrix;
use crate::spectral::SpectralTransform;

pub const MAGIC: &[u8; 4] = b"LAF1";

const HEADER_LEN: usize = 4 + 3 * 4 + 6 * 8;

struct Header {
    n1: u32,
    n2: u32,
    mz: u32,
    bounds: [f64; 6],
}

fn write_container<W: Write>(out: &mut W, h: &Header, values: &[Complex64]) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * values.len());
    buf.extend_from_slice(MAGIC);
    for v in [h.n1, h.n2, h.mz] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for b in h.bounds {
        buf.extend_from_slice(&b.to_le_bytes());
    }
    for v in values {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_container<R: Read>(input: &mut R) -> Result<(Header, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("file too short for header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected LAF1".into()));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let (n1, n2, mz) = (u32_at(4), u32_at(8), u32_at(12));
    let mut bounds = [0.0; 6];
    for (k, b) in bounds.iter_mut().enumerate() {
        *b = f64_at(16 + 8 * k);
    }
    let count = (n1 as usize)
        .checked_mul(n2 as usize)
        .and_then(|v| v.checked_mul(mz as usize))
        .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 16 * count {
        return Err(Error::Format(format!(
            "expected {} payload bytes for {n1}x{n2}x{mz}, found {}",
            16 * count,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((Header { n1, n2, mz, bounds }, values))
}

fn field_header(grid: &Grid3D) -> Header {
    Header {
        n1: grid.n() as u32,
        n2: grid.n() as u32,
        mz: grid.nz() as u32,
        bounds: grid.bounds(),
    }
}

fn grid_from_header(h: &Header) -> Result<Grid3D> {
    if h.n1 != h.n2 {
        return Err(Error::Format(format!("non-square transverse size {}x{}", h.n1, h.n2)));
    }
    if h.mz == 0 {
        return Err(Error::Format("no axial planes".into()));
    }
    let [x0, x1, y0, y1, z0, z1] = h.bounds;
    let z = if h.mz == 1 {
        vec![z0]
    } else {
        crate::grid::AxialRange::new(z0, z1, h.mz as usize).nodes()
    };
    Grid3D::new(x0, x1, y0, y1, h.n1 as usize, z).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_complex_field<W: Write>(out: &mut W, field: &ComplexField) -> Result<()> {
    write_container(out, &field_header(field.grid()), field.values())
}

pub fn read_complex_field<R: Read>(input: &mut R) -> Result<ComplexField> {
    let (h, values) = read_container(input)?;
    let grid = grid_from_header(&h)?;
    ComplexField::new(grid, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_real_field<W: Write>(out: &mut W, field: &RealField) -> Result<()> {
    write_complex_field(out, &field.to_complex())
}

/// Reads a dump whose imaginary parts are all zero.
pub fn read_real_field<R: Read>(input: &mut R) -> Result<RealField> {
    let c = read_complex_field(input)?;
    if c.values().iter().any(|v| v.im != 0.0) {
        return Err(Error::Format("expected a real field, found nonzero imaginary parts".into()));
    }
    Ok(c.real_part())
}

pub fn save_complex_field(path: &Path, field: &ComplexField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_complex_field(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn load_complex_field(path: &Path) -> Result<ComplexField> {
    read_complex_field(&mut BufReader::new(File::open(path)?))
}

pub fn save_real_field(path: &Path, field: &RealField) -> Result<()> {
    save_complex_field(path, &field.to_complex())
}

pub fn load_real_field(path: &Path) -> Result<RealField> {
    read_real_field(&mut BufReader::new(File::open(path)?))
}

/// Writes `{prefix}_z{iz:04}.csv` with columns `x,y,re,im` for every plane.
pub fn write_slice_csvs(dir: &Path, prefix: &str, field: &ComplexField) -> Result<Vec<PathBuf>> {
    let grid = field.grid();
    let n = grid.n();
    let mut paths = Vec::with_capacity(grid.nz());
    for iz in 0..grid.nz() {
        let path = dir.join(format!("{prefix}_z{iz:04}.csv"));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "x,y,re,im")?;
        let slab = field.slab(iz);
        for iy in 0..n {
            for ix in 0..n {
                let v = slab[iy * n + ix];
                writeln!(w, "{},{},{:.17e},{:.17e}", grid.x(ix), grid.y(iy), v.re, v.im)?;
            }
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

/// Stable 64-bit FNV-1a fingerprint of a grid's geometry.
pub fn grid_hash(grid: &Grid3D) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&(grid.n() as u64).to_le_bytes());
    for b in grid.bounds() {
        eat(&b.to_le_bytes());
    }
    for z in grid.z_nodes() {
        eat(&z.to_le_bytes());
    }
    h
}

/// Cache file name keyed by both grids and the frequency.
pub fn kernel_cache_name(scatterers: &Grid3D, receivers: &Grid3D, omega: f64) -> String {
    format!(
        "kernel-{:016x}-{:016x}-{:016x}.laf",
        grid_hash(scatterers),
        grid_hash(receivers),
        omega.to_bits()
    )
}

pub fn write_kernel_cache<W: Write>(out: &mut W, table: &GreenKernelTable) -> Result<()> {
    let offsets = table.offsets();
    let h = Header {
        n1: table.lattice().n_orbits() as u32,
        n2: 1,
        mz: offsets.len() as u32,
        bounds: [
            table.omega(),
            table.lattice().n() as f64,
            table.rows() as f64,
            table.cols() as f64,
            offsets[0],
            offsets[offsets.len() - 1],
        ],
    };
    write_container(out, &h, table.raw_values())
}

/// Reads a cached table and checks it against the grids it will be used with.
pub fn read_kernel_cache<R: Read>(
    input: &mut R,
    scatterers: &Grid3D,
    receivers: &Grid3D,
    omega: f64,
    transform: &SpectralTransform,
) -> Result<GreenKernelTable> {
    let (h, values) = read_container(input)?;
    let (offsets, index) = offset_table(scatterers, receivers);
    let lat = transform.lattice().clone();
    let [w, n, rows, cols, lo, hi] = h.bounds;
    let consistent = h.n2 == 1
        && h.n1 as usize == lat.n_orbits()
        && h.mz as usize == offsets.len()
        && w == omega
        && n == lat.n() as f64
        && rows == receivers.nz() as f64
        && cols == scatterers.nz() as f64
        && lo == offsets[0]
        && hi == offsets[offsets.len() - 1];
    if !consistent {
        return Err(Error::Format("kernel cache does not match grids or frequency".into()));
    }
    GreenKernelTable::from_parts(omega, lat, receivers.nz(), scatterers.nz(), offsets, index, values)
}

/// CSV of `(mode, |Ω|, σ_1, …, σ_min)` for one representative mode per orbit.
pub fn write_spectrum_csv<W: Write>(out: &mut W, table: &GreenKernelTable, weights: &[f64]) -> Result<()> {
    let lat = table.lattice();
    let k = table.rows().min(table.cols());
    write!(out, "mode,omega_abs")?;
    for i in 1..=k {
        write!(out, ",s{i}")?;
    }
    writeln!(out)?;
    for o in 0..lat.n_orbits() {
        let m = lat.orbit_representative(o);
        let a = orbit_matrix(table, o, table.omega(), weights)?;
        let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        write!(out, "{m},{:.17e}", lat.omega_abs(m))?;
        for v in s {
            write!(out, ",{v:.17e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
