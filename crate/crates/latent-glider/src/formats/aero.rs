//! Reference-aircraft tables as JSON arrays. Angles are stored in degrees.

use std::path::Path;

use latent_glider_core::flightsim::AeroProfile;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroProfileRecord {
    pub name: String,
    /// `[alpha_deg, cl]` pairs.
    pub cl_breakpoints: Vec<[f64; 2]>,
    pub cd0: f64,
    pub k_per_rad2: f64,
    pub alpha_min_deg: f64,
    /// Pitch equilibrium; defaults to `alpha_min_deg` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_trim_deg: Option<f64>,
    pub stability: f64,
    pub maneuverability: f64,
    pub area_ratio: f64,
}

impl From<&AeroProfile> for AeroProfileRecord {
    fn from(p: &AeroProfile) -> Self {
        Self {
            name: p.name.clone(),
            cl_breakpoints: p.cl_breakpoints.iter().map(|&(a, cl)| [a.to_degrees(), cl]).collect(),
            cd0: p.cd0,
            k_per_rad2: p.k,
            alpha_min_deg: p.alpha_min.to_degrees(),
            alpha_trim_deg: (p.alpha_trim != p.alpha_min).then(|| p.alpha_trim.to_degrees()),
            stability: p.stability,
            maneuverability: p.maneuverability,
            area_ratio: p.area_ratio,
        }
    }
}

impl AeroProfileRecord {
    pub fn to_profile(&self) -> Result<AeroProfile, String> {
        let p = AeroProfile {
            name: self.name.clone(),
            cl_breakpoints: self.cl_breakpoints.iter().map(|&[a, cl]| (a.to_radians(), cl)).collect(),
            cd0: self.cd0,
            k: self.k_per_rad2,
            alpha_min: self.alpha_min_deg.to_radians(),
            alpha_trim: self.alpha_trim_deg.unwrap_or(self.alpha_min_deg).to_radians(),
            stability: self.stability,
            maneuverability: self.maneuverability,
            area_ratio: self.area_ratio,
        };
        p.validate().map_err(|e| format!("profile `{}`: {e}", self.name))?;
        Ok(p)
    }
}

pub fn parse_profiles(json: &str) -> Result<Vec<AeroProfile>, String> {
    let records: Vec<AeroProfileRecord> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    if records.is_empty() {
        return Err("profile table is empty".into());
    }
    records.iter().map(AeroProfileRecord::to_profile).collect()
}

pub fn profiles_json(table: &[AeroProfile]) -> String {
    let records: Vec<AeroProfileRecord> = table.iter().map(Into::into).collect();
    serde_json::to_string_pretty(&records).expect("profile records always serialize")
}

pub fn read_profiles(path: &Path) -> Result<Vec<AeroProfile>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profiles(&text).map_err(|m| Error::format(path, m))
}
