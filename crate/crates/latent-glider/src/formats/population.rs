//! Population snapshots: magic `POP1`, `u32` generation, individual count
//! and genome length, then every genome as little-endian `f32`, then every
//! landing height as `f32`.

use std::path::Path;

use latent_glider_core::optimizer::Population;

use super::{put_f32s, put_u32, to_u32, LeReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"POP1";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub generation: usize,
    pub genomes: Vec<Vec<f64>>,
    pub heights: Vec<f64>,
}

impl From<&Population> for Snapshot {
    fn from(p: &Population) -> Self {
        Self {
            generation: p.generation,
            genomes: p.individuals.iter().map(|i| i.genome.clone()).collect(),
            heights: p.individuals.iter().map(|i| i.height).collect(),
        }
    }
}

pub fn encode_snapshot(s: &Snapshot) -> Result<Vec<u8>, String> {
    let len = s.genomes.first().map_or(0, Vec::len);
    if s.genomes.iter().any(|g| g.len() != len) || s.heights.len() != s.genomes.len() {
        return Err("ragged population".into());
    }
    let mut out = Vec::with_capacity(16 + 4 * s.genomes.len() * (len + 1));
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, to_u32(s.generation, "generation")?);
    put_u32(&mut out, to_u32(s.genomes.len(), "population")?);
    put_u32(&mut out, to_u32(len, "genome length")?);
    for g in &s.genomes {
        put_f32s(&mut out, g);
    }
    put_f32s(&mut out, &s.heights);
    Ok(out)
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, String> {
    let mut r = LeReader::new(bytes);
    r.magic(MAGIC)?;
    let generation = r.u32()? as usize;
    let n = r.u32()? as usize;
    let len = r.u32()? as usize;
    let genomes = (0..n).map(|_| r.f32s(len)).collect::<Result<Vec<_>, _>>()?;
    let heights = r.f32s(n)?;
    r.finish()?;
    Ok(Snapshot { generation, genomes, heights })
}

pub fn write_snapshot(path: &Path, population: &Population) -> Result<()> {
    let bytes = encode_snapshot(&population.into()).map_err(|m| Error::format(path, m))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes).map_err(|m| Error::format(path, m))
}
