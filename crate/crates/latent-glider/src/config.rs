//! JSON run configuration. Every key is optional; missing keys take the
//! desk-scale defaults and command-line flags override file values.

use std::path::{Path, PathBuf};

use latent_glider_core::flightsim::{builtin_profiles, AeroProfile, DesignTask};
use latent_glider_core::learner::LearnerConfig;
use latent_glider_core::optimizer::GaConfig;
use latent_glider_core::sdf::GridSpec;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::formats::aero::read_profiles;

/// Launch and material settings with angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub launch_speed: f64,
    pub launch_pitch_deg: f64,
    pub material_density: f64,
    pub air_density: f64,
    pub gap_distance: f64,
    pub target_height: f64,
    pub box_size: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        let t = DesignTask::default();
        Self {
            launch_speed: t.launch_speed,
            launch_pitch_deg: t.launch_pitch.to_degrees(),
            material_density: t.material_density,
            air_density: t.air_density,
            gap_distance: t.gap_distance,
            target_height: t.target_height,
            box_size: t.box_size,
        }
    }
}

impl TaskConfig {
    pub fn design_task(&self) -> Result<DesignTask> {
        let t = DesignTask {
            launch_speed: self.launch_speed,
            launch_pitch: self.launch_pitch_deg.to_radians(),
            material_density: self.material_density,
            air_density: self.air_density,
            gap_distance: self.gap_distance,
            target_height: self.target_height,
            box_size: self.box_size,
        };
        t.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; copied into the learner and optimizer sections.
    pub seed: u64,
    /// Worker threads (0 = one per core).
    pub threads: usize,
    /// Lattice nodes per axis of the design box.
    pub resolution: usize,
    /// Normalization clamp distance in lattice cells.
    pub d_max_cells: f64,
    /// Cells along a synthetic glider's longest edge when it is meshed.
    pub mesh_cells: usize,
    pub corpus_size: usize,
    /// Designs exported as meshes after optimization.
    pub top_k: usize,
    /// Reference-aircraft JSON table; the built-in table when absent.
    pub profiles: Option<PathBuf>,
    #[serde(deserialize_with = "desk_learner")]
    pub learner: LearnerConfig,
    pub ga: GaConfig,
    pub task: TaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            threads: 0,
            resolution: 17,
            d_max_cells: 4.0,
            mesh_cells: 40,
            corpus_size: 200,
            top_k: 10,
            profiles: None,
            learner: LearnerConfig::desk(),
            ga: GaConfig::default(),
            task: TaskConfig::default(),
        }
    }
}

/// A partial `learner` section overrides the desk setup key by key rather
/// than the full-scale defaults.
fn desk_learner<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<LearnerConfig, D::Error> {
    let patch = serde_json::Value::deserialize(d)?;
    let serde_json::Value::Object(patch) = patch else {
        return Err(D::Error::custom("learner must be an object"));
    };
    let mut base = serde_json::to_value(LearnerConfig::desk()).map_err(D::Error::custom)?;
    if let serde_json::Value::Object(b) = &mut base {
        b.extend(patch);
    }
    serde_json::from_value(base).map_err(D::Error::custom)
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    /// Propagates shared settings into the sections and validates them.
    pub fn resolved(mut self) -> Result<Self> {
        self.learner.seed = self.seed;
        self.ga.seed = self.seed;
        self.learner.resolution = [self.resolution; 3];
        if self.resolution < 2 {
            return Err(Error::Usage("resolution must be at least 2".into()));
        }
        if !(self.d_max_cells > 0.0) {
            return Err(Error::Usage("d_max_cells must be positive".into()));
        }
        self.learner.validate().map_err(|e| Error::Usage(e.to_string()))?;
        self.ga.validate().map_err(|e| Error::Usage(e.to_string()))?;
        self.task.design_task()?;
        Ok(self)
    }

    pub fn lattice(&self) -> Result<GridSpec> {
        Ok(GridSpec::design_box(self.resolution)?)
    }

    pub fn d_max(&self) -> Result<f64> {
        Ok(self.d_max_cells * self.lattice()?.spacing)
    }

    pub fn profile_table(&self) -> Result<Vec<AeroProfile>> {
        match &self.profiles {
            Some(p) => read_profiles(p),
            None => Ok(builtin_profiles()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config always serializes")
    }
}
