//! Hierarchical variational shape autoencoder over normalized signed
//! distance lattices.
//!
//! The encoder is a stack of valid 3D convolutions, each followed by a
//! rectifier and batch normalization. A global Gaussian code is read from
//! the flattened last activation; a chain of local codes is conditioned on
//! the global code, globally pooled first-layer features and the previous
//! local code. The decoder mirrors the encoder with transposed convolutions
//! and ends in an element-wise sigmoid.

mod config;
pub(crate) mod layers;
mod model;
mod params;
mod train;

use alloc::vec::Vec;

pub use config::{LearnerConfig, UpdateRule};
pub use model::{
    activation_pattern, decode, decode_batch, elbo_loss, elbo_loss_weighted, encode, encode_dataset, gradients,
    gradients_weighted, kl_divergence, EncodeMode, LossBreakdown,
};
pub use params::{Architecture, Gradients, LearnerParams, Slot, TensorSpec};
pub use train::{train, train_with, Checkpoint, EpochLoss, TrainFailure, TrainOutcome};

use crate::sdf::{GridSpec, SdfGrid};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearnerError {
    #[error("invalid learner configuration: {0}")]
    Config(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(&'static str),
    #[error("empty dataset or batch")]
    Empty,
    #[error("numeric divergence ({what}) at batch element {index}")]
    Divergence { index: usize, what: &'static str },
}

/// Concatenated global and local latent codes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatentVector {
    pub global: Vec<f64>,
    pub local: Vec<Vec<f64>>,
}

impl LatentVector {
    pub fn len(&self) -> usize {
        self.global.len() + self.local.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `global ++ local₁ ++ … ++ local_L`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.global.clone();
        for l in &self.local {
            v.extend_from_slice(l);
        }
        v
    }

    pub fn from_flat(flat: &[f64], config: &LearnerConfig) -> Result<Self, LearnerError> {
        if flat.len() != config.latent_len() {
            return Err(LearnerError::Shape("latent length does not match config"));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Shape("latent entries must be finite"));
        }
        let g = config.global_dim;
        Ok(Self {
            global: flat[..g].to_vec(),
            local: flat[g..].chunks_exact(config.local_dim).map(<[f64]>::to_vec).collect(),
        })
    }
}

/// Lattice values on the occupancy-probability scale, 0.5 at the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl NormalizedGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.len() != spec.node_count() {
            return Err(LearnerError::Shape("value count does not match lattice"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LearnerError::Shape("normalized values must lie in [0, 1]"));
        }
        Ok(Self { spec, values })
    }

    /// Fraction of nodes whose inside/outside label (threshold 0.5) agrees
    /// under intersection over union of the inside sets; 1 when both empty.
    pub fn iou(&self, other: &NormalizedGrid) -> f64 {
        let mut inter = 0usize;
        let mut union = 0usize;
        for (a, b) in self.values.iter().zip(&other.values) {
            let (ia, ib) = (*a > 0.5, *b > 0.5);
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
        if union == 0 { 1.0 } else { inter as f64 / union as f64 }
    }
}

pub fn default_d_max(spec: &GridSpec) -> f64 {
    4.0 * spec.spacing
}

/// `clamp(0.5 + 0.5·d/d_max, 0, 1)` per node.
pub fn normalize_sdf(grid: &SdfGrid, d_max: f64) -> NormalizedGrid {
    let values = grid.values.iter().map(|d| (0.5 + 0.5 * d / d_max).clamp(0.0, 1.0)).collect();
    NormalizedGrid { spec: grid.spec, values }
}

/// Inverse of [`normalize_sdf`]; the endpoints map to ±`d_max`.
pub fn denormalize(grid: &NormalizedGrid, d_max: f64) -> SdfGrid {
    let values = grid.values.iter().map(|v| (2.0 * v - 1.0) * d_max).collect();
    SdfGrid { spec: grid.spec, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn spec() -> GridSpec {
        GridSpec::design_box(7).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let s = spec();
        let n = s.node_count();
        let mut values = vec![0.0; n];
        values[1] = 10.0;
        values[2] = -0.5;
        let g = SdfGrid::new(s, values).unwrap();
        let out = normalize_sdf(&g, 1.0);
        assert_eq!(out.values[0], 0.5);
        assert_eq!(out.values[1], 1.0);
        assert_eq!(out.values[2], 0.25);
    }

    #[test]
    fn denormalize_inverts() {
        let s = spec();
        let d_max = 0.37;
        let mut values = vec![0.0; s.node_count()];
        values[0] = 0.123 * d_max;
        let g = SdfGrid::new(s, values).unwrap();
        let back = denormalize(&normalize_sdf(&g, d_max), d_max);
        assert!((back.values[0] - 0.123 * d_max).abs() < 1e-12);
        let one = NormalizedGrid { spec: s, values: vec![1.0; s.node_count()] };
        assert_eq!(denormalize(&one, d_max).values[0], d_max);
    }

    #[test]
    fn latent_flat_roundtrip() {
        let c = LearnerConfig::desk();
        let flat: Vec<f64> = (0..c.latent_len()).map(|i| i as f64).collect();
        let l = LatentVector::from_flat(&flat, &c).unwrap();
        assert_eq!(l.local.len(), c.local_codes);
        assert_eq!(l.flatten(), flat);
    }
}
