use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::LearnerConfig;
use super::layers::{volume, ConvShape};
use super::LearnerError;
use crate::sdf::GridSpec;

/// Location of one tensor inside a flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Named tensor in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub slot: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct EncoderLayer {
    pub shape: ConvShape,
    pub w: Slot,
    pub b: Slot,
    pub gamma: Slot,
    pub beta: Slot,
    pub running_mean: Slot,
    pub running_var: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Head {
    pub mean_w: Slot,
    pub mean_b: Slot,
    pub logvar_w: Slot,
    pub logvar_b: Slot,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LocalBlock {
    pub in_dim: usize,
    pub fc1_w: Slot,
    pub fc1_b: Slot,
    pub fc2_w: Slot,
    pub fc2_b: Slot,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct BnSlots {
    pub gamma: Slot,
    pub beta: Slot,
    pub running_mean: Slot,
    pub running_var: Slot,
}

/// Transposed convolution (small → big); `bn` is absent on the output layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DecoderLayer {
    pub shape: ConvShape,
    pub w: Slot,
    pub b: Slot,
    pub bn: Option<BnSlots>,
}

/// Tensor layout derived from a [`LearnerConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: LearnerConfig,
    pub(crate) encoder: Vec<EncoderLayer>,
    pub(crate) global: Head,
    pub(crate) locals: Vec<LocalBlock>,
    pub(crate) dec_fc_w: Slot,
    pub(crate) dec_fc_b: Slot,
    pub(crate) decoder: Vec<DecoderLayer>,
    /// Flattened length of the last encoder activation.
    pub feature_len: usize,
    pub pool_len: usize,
    pub tensors: Vec<TensorSpec>,
    pub buffers: Vec<TensorSpec>,
    pub param_len: usize,
    pub buffer_len: usize,
}

struct Allocator {
    tensors: Vec<TensorSpec>,
    len: usize,
}

impl Allocator {
    fn new() -> Self {
        Self { tensors: Vec::new(), len: 0 }
    }

    fn take(&mut self, name: String, shape: &[usize]) -> Slot {
        let len = shape.iter().product();
        let slot = Slot { offset: self.len, len };
        self.len += len;
        self.tensors.push(TensorSpec { name, shape: shape.to_vec(), slot });
        slot
    }
}

impl Architecture {
    pub fn new(config: &LearnerConfig) -> Result<Self, LearnerError> {
        let shapes = config.conv_shapes()?;
        let mut p = Allocator::new();
        let mut buf = Allocator::new();
        let mut encoder = Vec::new();
        for (l, sh) in shapes.iter().enumerate() {
            let k = sh.kernel;
            encoder.push(EncoderLayer {
                shape: *sh,
                w: p.take(format!("encoder.conv{l}.weight"), &[sh.c_out, sh.c_in, k, k, k]),
                b: p.take(format!("encoder.conv{l}.bias"), &[sh.c_out]),
                gamma: p.take(format!("encoder.bn{l}.gamma"), &[sh.c_out]),
                beta: p.take(format!("encoder.bn{l}.beta"), &[sh.c_out]),
                running_mean: buf.take(format!("encoder.bn{l}.running_mean"), &[sh.c_out]),
                running_var: buf.take(format!("encoder.bn{l}.running_var"), &[sh.c_out]),
            });
        }
        let last = shapes.last().expect("validated non-empty");
        let feature_len = last.c_out * volume(last.small);
        let pool_len = shapes[0].c_out;
        let g = config.global_dim;
        let global = Head {
            mean_w: p.take("global.mean.weight".into(), &[g, feature_len]),
            mean_b: p.take("global.mean.bias".into(), &[g]),
            logvar_w: p.take("global.logvar.weight".into(), &[g, feature_len]),
            logvar_b: p.take("global.logvar.bias".into(), &[g]),
        };
        let (w, d) = (config.fc_width, config.local_dim);
        let mut locals = Vec::new();
        for i in 0..config.local_codes {
            let in_dim = g + pool_len + if i > 0 { d } else { 0 };
            locals.push(LocalBlock {
                in_dim,
                fc1_w: p.take(format!("local{i}.fc1.weight"), &[w, in_dim]),
                fc1_b: p.take(format!("local{i}.fc1.bias"), &[w]),
                fc2_w: p.take(format!("local{i}.fc2.weight"), &[w, w]),
                fc2_b: p.take(format!("local{i}.fc2.bias"), &[w]),
                head: Head {
                    mean_w: p.take(format!("local{i}.mean.weight"), &[d, w]),
                    mean_b: p.take(format!("local{i}.mean.bias"), &[d]),
                    logvar_w: p.take(format!("local{i}.logvar.weight"), &[d, w]),
                    logvar_b: p.take(format!("local{i}.logvar.bias"), &[d]),
                },
            });
        }
        let z = config.latent_len();
        let dec_fc_w = p.take("decoder.fc.weight".into(), &[feature_len, z]);
        let dec_fc_b = p.take("decoder.fc.bias".into(), &[feature_len]);
        let mut decoder = Vec::new();
        for l in (0..shapes.len()).rev() {
            let enc = shapes[l];
            let sh = ConvShape { c_in: enc.c_out, c_out: enc.c_in, ..enc };
            let k = sh.kernel;
            let wslot = p.take(format!("decoder.deconv{l}.weight"), &[sh.c_in, sh.c_out, k, k, k]);
            let bslot = p.take(format!("decoder.deconv{l}.bias"), &[sh.c_out]);
            let bn = (l > 0).then(|| BnSlots {
                gamma: p.take(format!("decoder.bn{l}.gamma"), &[sh.c_out]),
                beta: p.take(format!("decoder.bn{l}.beta"), &[sh.c_out]),
                running_mean: buf.take(format!("decoder.bn{l}.running_mean"), &[sh.c_out]),
                running_var: buf.take(format!("decoder.bn{l}.running_var"), &[sh.c_out]),
            });
            decoder.push(DecoderLayer { shape: sh, w: wslot, b: bslot, bn });
        }
        Ok(Self {
            config: config.clone(),
            encoder,
            global,
            locals,
            dec_fc_w,
            dec_fc_b,
            decoder,
            feature_len,
            pool_len,
            param_len: p.len,
            buffer_len: buf.len,
            tensors: p.tensors,
            buffers: buf.tensors,
        })
    }
}

/// Trainable weights plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerParams {
    pub arch: Architecture,
    /// Lattice the decoder's output is placed on.
    pub lattice: GridSpec,
    pub values: Vec<f64>,
    pub buffers: Vec<f64>,
}

impl LearnerParams {
    /// He-normal initialization for rectified layers, small heads, unit
    /// batch-norm scale and zero shift.
    pub fn init(config: &LearnerConfig, lattice: GridSpec, seed: u64) -> Result<Self, LearnerError> {
        let arch = Architecture::new(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_len];
        let mut fill = |slot: Slot, std: f64, values: &mut [f64]| {
            for v in &mut values[slot.range()] {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = n * std;
            }
        };
        for layer in &arch.encoder {
            let fan_in = (layer.shape.c_in * layer.shape.kernel_volume()) as f64;
            fill(layer.w, (2.0 / fan_in).sqrt(), &mut values);
            values[layer.gamma.range()].fill(1.0);
        }
        let head_init = |head: &Head, fan_in: usize, values: &mut [f64], fill: &mut dyn FnMut(Slot, f64, &mut [f64])| {
            fill(head.mean_w, (1.0 / fan_in as f64).sqrt(), values);
            fill(head.logvar_w, 0.1 * (1.0 / fan_in as f64).sqrt(), values);
        };
        head_init(&arch.global, arch.feature_len, &mut values, &mut fill);
        for block in &arch.locals {
            fill(block.fc1_w, (2.0 / block.in_dim as f64).sqrt(), &mut values);
            fill(block.fc2_w, (2.0 / config.fc_width as f64).sqrt(), &mut values);
            head_init(&block.head, config.fc_width, &mut values, &mut fill);
        }
        fill(arch.dec_fc_w, (2.0 / config.latent_len() as f64).sqrt(), &mut values);
        for layer in &arch.decoder {
            let sh = layer.shape;
            let taps = sh.kernel.div_ceil(sh.stride).pow(3);
            fill(layer.w, (2.0 / (sh.c_in * taps) as f64).sqrt(), &mut values);
            if let Some(bn) = &layer.bn {
                values[bn.gamma.range()].fill(1.0);
            }
        }
        let mut buffers = vec![0.0; arch.buffer_len];
        for layer in &arch.encoder {
            buffers[layer.running_var.range()].fill(1.0);
        }
        for bn in arch.decoder.iter().filter_map(|l| l.bn.as_ref()) {
            buffers[bn.running_var.range()].fill(1.0);
        }
        Ok(Self { arch, lattice, values, buffers })
    }

    /// Every weight and bias zero; batch-norm at identity.
    pub fn zeros(config: &LearnerConfig, lattice: GridSpec) -> Result<Self, LearnerError> {
        let mut p = Self::init(config, lattice, 0)?;
        p.values.fill(0.0);
        for layer in &p.arch.encoder {
            p.values[layer.gamma.range()].fill(1.0);
        }
        for bn in p.arch.decoder.iter().filter_map(|l| l.bn.as_ref()) {
            p.values[bn.gamma.range()].fill(1.0);
        }
        Ok(p)
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.arch.config
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.arch.tensors.iter().find(|t| t.name == name).map(|t| &self.values[t.slot.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let slot = self.arch.tensors.iter().find(|t| t.name == name)?.slot;
        Some(&mut self.values[slot.range()])
    }

    pub(crate) fn p(&self, s: Slot) -> &[f64] {
        &self.values[s.range()]
    }

    pub(crate) fn buf(&self, s: Slot) -> &[f64] {
        &self.buffers[s.range()]
    }

    /// Rebuilds params from a layout and flat buffers (checkpoint loading).
    pub fn from_parts(
        config: &LearnerConfig,
        lattice: GridSpec,
        values: Vec<f64>,
        buffers: Vec<f64>,
    ) -> Result<Self, LearnerError> {
        let arch = Architecture::new(config)?;
        if values.len() != arch.param_len || buffers.len() != arch.buffer_len {
            return Err(LearnerError::Shape("parameter buffer length does not match config"));
        }
        if buffers.iter().any(|v| !v.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Shape("non-finite parameter"));
        }
        Ok(Self { arch, lattice, values, buffers })
    }
}

/// Parameter-shaped gradient set.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub values: Vec<f64>,
}

impl Gradients {
    pub fn tensor<'a>(&'a self, arch: &Architecture, name: &str) -> Option<&'a [f64]> {
        arch.tensors.iter().find(|t| t.name == name).map(|t| &self.values[t.slot.range()])
    }
}
