//! Latent-space glider design: mesh geometry, signed distance lattices, a
//! hierarchical variational shape autoencoder, a simplified glider flight
//! kernel and a genetic optimizer over latent vectors.
//!
//! The crate is `no_std` (with `alloc`); file formats, threading and the
//! command line live in the companion `latent-glider` crate.
#![no_std]

extern crate alloc;

mod bvh;
pub mod flightsim;
pub mod geom;
pub mod learner;
pub mod mesh;
pub mod optimizer;
pub mod sdf;
pub mod synth;

pub use geom::Vec3;
pub use mesh::{Aabb, TriangleMesh};
pub use learner::{LatentVector, LearnerConfig, LearnerParams, NormalizedGrid};
pub use sdf::{GridSpec, SdfGrid};
