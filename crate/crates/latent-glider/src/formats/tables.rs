//! Header-first CSV exports: loss history, flight trajectories, the
//! per-generation optimizer log and latent vectors.

use std::fs::File;
use std::path::Path;

use latent_glider_core::flightsim::GliderState;
use latent_glider_core::learner::EpochLoss;
use latent_glider_core::optimizer::GenerationStats;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

impl From<&EpochLoss> for LossRow {
    fn from(e: &EpochLoss) -> Self {
        Self { epoch: e.epoch, reconstruction: e.reconstruction, kl: e.kl, total: e.total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub alpha: f64,
}

impl From<&GliderState> for TrajectoryRow {
    fn from(s: &GliderState) -> Self {
        Self { t: s.t, x: s.x, y: s.y, vx: s.vx, vy: s.vy, pitch: s.pitch, pitch_rate: s.pitch_rate, alpha: s.alpha() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub mean: f64,
    pub within_0_1: f64,
    pub within_0_5: f64,
    pub max_height: f64,
    pub failures: usize,
}

impl From<&GenerationStats> for GenerationRow {
    fn from(s: &GenerationStats) -> Self {
        Self {
            generation: s.generation,
            best: s.best,
            median: s.median,
            mean: s.mean,
            within_0_1: s.within_0_1,
            within_0_5: s.within_0_5,
            max_height: s.max_height,
            failures: s.failures,
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

/// Streams rows to a CSV file, flushing after every record so an aborted
/// run leaves a readable prefix.
pub struct CsvLog {
    path: std::path::PathBuf,
    writer: csv::Writer<File>,
}

impl CsvLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf(), writer: csv::Writer::from_writer(file) })
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row).map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| csv_error(path, e))
}

/// Named latent vectors: header `name,z0,z1,...`.
pub fn write_latents(path: &Path, rows: &[(String, Vec<f64>)]) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["name".to_string()];
    header.extend((0..width).map(|i| format!("z{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (name, z) in rows {
        if z.len() != width {
            return Err(Error::format(path, "latent vectors differ in length"));
        }
        let mut rec = vec![name.clone()];
        rec.extend(z.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_latents(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let mut it = rec.iter();
        let name = it.next().ok_or_else(|| Error::format(path, "empty latent row"))?.to_string();
        let z = it
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::format(path, format!("bad latent value `{v}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push((name, z));
    }
    Ok(out)
}
