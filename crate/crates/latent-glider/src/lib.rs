//! File formats, parallel drivers and the command pipeline around
//! [`latent_glider_core`]: mesh and lattice IO, learner checkpoints, run
//! manifests, and the preprocess → train → optimize loop.

pub mod config;
pub mod error;
pub mod formats;
pub mod parallel;
pub mod pipeline;

pub use config::{RunConfig, TaskConfig};
pub use error::{Error, ExitKind, Result};
pub use latent_glider_core as core;
