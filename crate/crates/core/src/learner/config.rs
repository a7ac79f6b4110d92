use alloc::vec;
use alloc::vec::Vec;

use super::layers::{ConvShape, Size3};
use super::LearnerError;

/// Parameter update rule used by [`super::train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum UpdateRule {
    /// Adaptive moment estimation (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
    Sgd,
}

/// Architecture and training hyperparameters of the shape learner.
///
/// Defaults are the full-scale setup: convolution channels {32, 64, 128},
/// kernels {6, 5, 4}, strides {2, 2, 1}, two 100-wide fully-connected layers
/// per local code, learning rate 5e-3, batch size 64 and 1000 epochs on
/// 41³ grids. Latent sizes are implementation
/// choices: a 20-d global code and five 10-d local codes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LearnerConfig {
    pub resolution: [usize; 3],
    pub global_dim: usize,
    pub local_codes: usize,
    pub local_dim: usize,
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub fc_width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub kl_weight: f64,
    /// Fraction of epochs over which the KL weight ramps linearly from 0.
    pub kl_warmup_fraction: f64,
    pub update_rule: UpdateRule,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Epochs between retained checkpoints (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            resolution: [41; 3],
            global_dim: 20,
            local_codes: 5,
            local_dim: 10,
            channels: vec![32, 64, 128],
            kernels: vec![6, 5, 4],
            strides: vec![2, 2, 1],
            fc_width: 100,
            learning_rate: 5e-3,
            batch_size: 64,
            epochs: 1000,
            kl_weight: 1.0,
            kl_warmup_fraction: 0.1,
            update_rule: UpdateRule::Adam,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            checkpoint_every: 100,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    /// Desk-scale setup for 17³ grids: default channels and learning rate,
    /// kernels shrunk to {4, 3, 2} so every layer keeps a non-empty output.
    /// With only a few hundred optimizer steps, small batches and a light KL
    /// term reconstruct noticeably better than the full-scale settings.
    pub fn desk() -> Self {
        Self {
            resolution: [17; 3],
            kernels: vec![4, 3, 2],
            batch_size: 4,
            kl_weight: 0.03,
            epochs: 200,
            checkpoint_every: 50,
            ..Self::default()
        }
    }

    pub fn latent_len(&self) -> usize {
        self.global_dim + self.local_codes * self.local_dim
    }

    /// Spatial extents before and after each convolution.
    pub fn encoder_sizes(&self) -> Result<Vec<Size3>, LearnerError> {
        self.validate_counts()?;
        let mut sizes = vec![self.resolution];
        for (l, (&k, &s)) in self.kernels.iter().zip(&self.strides).enumerate() {
            let prev = sizes[l];
            let mut next = [0; 3];
            for a in 0..3 {
                if prev[a] < k {
                    return Err(LearnerError::Config("kernel larger than its input extent"));
                }
                next[a] = (prev[a] - k) / s + 1;
            }
            sizes.push(next);
        }
        Ok(sizes)
    }

    fn validate_counts(&self) -> Result<(), LearnerError> {
        let n = self.channels.len();
        if n == 0 || self.kernels.len() != n || self.strides.len() != n {
            return Err(LearnerError::Config("channels, kernels and strides need equal non-zero length"));
        }
        let dims_ok = self.resolution.iter().all(|&r| r >= 1)
            && self.global_dim >= 1
            && self.local_dim >= 1
            && self.fc_width >= 1
            && self.batch_size >= 1
            && self.channels.iter().chain(&self.kernels).chain(&self.strides).all(|&v| v >= 1);
        if !dims_ok {
            return Err(LearnerError::Config("every dimension must be at least 1"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        self.encoder_sizes().map(|_| ())
    }

    /// Geometry of each encoder convolution (the decoder reuses them
    /// transposed).
    pub(crate) fn conv_shapes(&self) -> Result<Vec<ConvShape>, LearnerError> {
        let sizes = self.encoder_sizes()?;
        Ok((0..self.channels.len())
            .map(|l| ConvShape {
                c_in: if l == 0 { 1 } else { self.channels[l - 1] },
                c_out: self.channels[l],
                kernel: self.kernels[l],
                stride: self.strides[l],
                big: sizes[l],
                small: sizes[l + 1],
            })
            .collect())
    }

    /// KL weight in effect during `epoch` (0-based) of a run.
    pub fn kl_weight_at(&self, epoch: usize) -> f64 {
        let warm = self.kl_warmup_fraction * self.epochs as f64;
        if warm <= 0.0 {
            return self.kl_weight;
        }
        self.kl_weight * ((epoch + 1) as f64 / warm).min(1.0)
    }
}
