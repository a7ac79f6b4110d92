use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{LearnerConfig, UpdateRule};
use super::layers::BnStats;
use super::model::{backward, train_forward, LossBreakdown};
use super::params::{LearnerParams, Slot};
use super::{LearnerError, NormalizedGrid};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Mean loss terms over one epoch (1-based `epoch`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub params: LearnerParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: LearnerParams,
    pub history: Vec<EpochLoss>,
    pub checkpoints: Vec<Checkpoint>,
}

/// An aborted run; `last_good` holds the parameters from before the
/// failing update (absent when setup itself failed).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainFailure {
    pub error: LearnerError,
    pub epoch: usize,
    pub last_good: Option<LearnerParams>,
    pub history: Vec<EpochLoss>,
    pub checkpoints: Vec<Checkpoint>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
    }
}

fn update_running(buffers: &mut [f64], mean: Slot, var: Slot, stats: &BnStats, momentum: f64) {
    for (r, m) in buffers[mean.range()].iter_mut().zip(&stats.mean) {
        *r = momentum * *r + (1.0 - momentum) * m;
    }
    let n = stats.count as f64;
    let unbias = if stats.count > 1 { n / (n - 1.0) } else { 1.0 };
    for (r, v) in buffers[var.range()].iter_mut().zip(&stats.var) {
        *r = momentum * *r + (1.0 - momentum) * v * unbias;
    }
}

pub fn train(dataset: &[NormalizedGrid], config: &LearnerConfig) -> Result<TrainOutcome, TrainFailure> {
    train_with(dataset, config, |_| {})
}

/// Mini-batch training with a per-epoch callback. Deterministic in
/// `(dataset, config)`.
pub fn train_with(
    dataset: &[NormalizedGrid],
    config: &LearnerConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome, TrainFailure> {
    let lattice = dataset.first().map(|g| g.spec);
    let setup = || -> Result<LearnerParams, LearnerError> {
        config.validate()?;
        let lattice = lattice.ok_or(LearnerError::Empty)?;
        for g in dataset {
            if g.spec.dims != config.resolution || g.values.len() != g.spec.node_count() {
                return Err(LearnerError::Shape("dataset grid does not match config resolution"));
            }
        }
        LearnerParams::init(config, lattice, config.seed)
    };
    let mut params = match setup() {
        Ok(p) => p,
        Err(error) => {
            return Err(TrainFailure { error, epoch: 0, last_good: None, history: Vec::new(), checkpoints: Vec::new() });
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11_5eed);
    let mut adam = Adam::new(params.values.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut checkpoints = Vec::new();
    let bs = config.batch_size.max(1);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let kl_weight = config.kl_weight_at(epoch);
        let mut sum = LossBreakdown::default();
        for chunk in order.chunks(bs) {
            let batch: Vec<NormalizedGrid> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let seed = rng.next_u64();
            let step = train_forward(&batch, &params, seed).and_then(|pass| {
                let grads = backward(&batch, &params, &pass, kl_weight)?;
                Ok((pass, grads))
            });
            let (pass, grads) = match step {
                Ok(v) => v,
                Err(mut error) => {
                    if let LearnerError::Divergence { index, .. } = &mut error {
                        *index = chunk[*index];
                    }
                    return Err(TrainFailure { error, epoch: epoch + 1, last_good: Some(params), history, checkpoints });
                }
            };
            for &(r, k) in pass.per_sample() {
                sum.reconstruction += r / dataset.len() as f64;
                sum.kl += k / dataset.len() as f64;
                sum.total += (r + kl_weight * k) / dataset.len() as f64;
            }
            match config.update_rule {
                UpdateRule::Adam => adam.step(&mut params.values, &grads.values, config.learning_rate),
                UpdateRule::Sgd => {
                    for (p, g) in params.values.iter_mut().zip(&grads.values) {
                        *p -= config.learning_rate * g;
                    }
                }
            }
            let arch = params.arch.clone();
            for (layer, stats) in arch.encoder.iter().zip(pass.enc_stats()) {
                if let Some(s) = stats {
                    update_running(&mut params.buffers, layer.running_mean, layer.running_var, s, config.bn_momentum);
                }
            }
            for (layer, stats) in arch.decoder.iter().zip(pass.dec_stats()) {
                if let (Some(bn), Some(s)) = (&layer.bn, stats) {
                    update_running(&mut params.buffers, bn.running_mean, bn.running_var, s, config.bn_momentum);
                }
            }
        }
        let record = EpochLoss { epoch: epoch + 1, reconstruction: sum.reconstruction, kl: sum.kl, total: sum.total };
        on_epoch(&record);
        history.push(record);
        if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
            checkpoints.push(Checkpoint { epoch: epoch + 1, params: params.clone() });
        }
    }
    Ok(TrainOutcome { params, history, checkpoints })
}
