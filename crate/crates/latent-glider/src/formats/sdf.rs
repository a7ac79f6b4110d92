//! `SDF1` lattice files: magic, `u32` dims, `f64` origin and spacing, then
//! `f32` values with x varying fastest.

use std::path::Path;

use latent_glider_core::sdf::{GridSpec, SdfGrid};
use latent_glider_core::Vec3;

use super::{put_f32s, put_f64, put_u32, to_u32, LeReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SDF1";

pub fn encode_sdf(grid: &SdfGrid) -> Result<Vec<u8>, String> {
    let mut out = Vec::with_capacity(40 + 4 * grid.values.len());
    out.extend_from_slice(MAGIC);
    for d in grid.spec.dims {
        put_u32(&mut out, to_u32(d, "dimension")?);
    }
    for c in grid.spec.origin.to_array() {
        put_f64(&mut out, c);
    }
    put_f64(&mut out, grid.spec.spacing);
    put_f32s(&mut out, &grid.values);
    Ok(out)
}

pub fn decode_sdf(bytes: &[u8]) -> Result<SdfGrid, String> {
    let mut r = LeReader::new(bytes);
    r.magic(MAGIC)?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
    let spacing = r.f64()?;
    let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("lattice size overflows")?;
    let values = r.f32s(count)?;
    r.finish()?;
    SdfGrid::new(GridSpec { dims, origin, spacing }, values).map_err(|e| e.to_string())
}

pub fn write_sdf(path: &Path, grid: &SdfGrid) -> Result<()> {
    let bytes = encode_sdf(grid).map_err(|m| Error::format(path, m))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_sdf(path: &Path) -> Result<SdfGrid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sdf(&bytes).map_err(|m| Error::format(path, m))
}
