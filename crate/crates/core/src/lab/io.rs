//! File formats.
//!
//! Binary fields: 16-byte header (`b"PHI2"`, then little-endian `u32`
//! version, `d` and `M`) followed by the coefficients as little-endian `f64`.
//! Trajectories share the header, then a `u64` state count, the times and the
//! states back to back. CSV files open with a comment line recording the
//! configuration hash, seed and code version.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::spectral::{hneg_sq, SpectralBasis, SpectralField};

pub const MAGIC: &[u8; 4] = b"PHI2";
pub const FORMAT_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

fn write_header(w: &mut impl Write, basis: &SpectralBasis) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(basis.dim() as u32).to_le_bytes())?;
    w.write_all(&(basis.modes_per_dim() as u32).to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_header(r: &mut impl Read, basis: &SpectralBasis) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (d, m) = (read_u32(r)? as usize, read_u32(r)? as usize);
    if d != basis.dim() || m != basis.modes_per_dim() {
        return Err(Error::Format(format!(
            "file holds d = {d}, M = {m}; basis has d = {}, M = {}",
            basis.dim(),
            basis.modes_per_dim()
        )));
    }
    Ok(())
}

pub fn write_field(w: &mut impl Write, field: &SpectralField) -> Result<()> {
    write_header(w, field.basis())?;
    write_f64s(w, field.coeffs())
}

pub fn read_field(r: &mut impl Read, basis: &Arc<SpectralBasis>) -> Result<SpectralField> {
    read_header(r, basis)?;
    SpectralField::new(basis, read_f64s(r, basis.len())?)
}

pub fn write_trajectory(w: &mut impl Write, u: &Trajectory) -> Result<()> {
    write_header(w, u.basis())?;
    w.write_all(&(u.len() as u64).to_le_bytes())?;
    write_f64s(w, u.times())?;
    for s in u.states() {
        write_f64s(w, s.coeffs())?;
    }
    Ok(())
}

pub fn read_trajectory(r: &mut impl Read, basis: &Arc<SpectralBasis>) -> Result<Trajectory> {
    read_header(r, basis)?;
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let n = usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("count".into()))?;
    let times = read_f64s(r, n)?;
    let states = (0..n)
        .map(|_| SpectralField::new(basis, read_f64s(r, basis.len())?))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(times, states)
}

pub fn csv_header(config_hash: &str, seed: u64) -> String {
    format!("# config_hash={config_hash} seed={seed} version={CODE_VERSION}\n")
}

/// Columns `time, norm_h, norm_hneg, max_abs`, every `every`-th state plus
/// the last one.
pub fn trajectory_csv(u: &Trajectory, s: f64, every: usize) -> Result<String> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::param("s", s));
    }
    let every = every.max(1);
    let eigs = u.basis().eigenvalues();
    let mut out = String::from("time,norm_h,norm_hneg,max_abs\n");
    let last = u.len().saturating_sub(1);
    for (i, (t, x)) in u.times().iter().zip(u.states()).enumerate() {
        if i % every != 0 && i != last {
            continue;
        }
        out.push_str(&format!(
            "{t},{},{},{}\n",
            x.norm_h(),
            hneg_sq(x.coeffs(), eigs, s).sqrt(),
            x.max_abs()
        ));
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

pub fn write_binary(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}
