//! `VSL1` learner checkpoints.
//!
//! Layout (little-endian): magic `VSL1`, then a config block
//!
//! ```text
//! u32 resolution[3]
//! u32 global_dim, local_codes, local_dim, fc_width
//! u32 layer_count, then per layer u32 channels, kernel, stride
//! f64 learning_rate; u32 batch_size; u32 epochs
//! f64 kl_weight; f64 kl_warmup_fraction; u32 update_rule (0 Adam, 1 SGD)
//! f64 bn_momentum; f64 bn_eps; u32 checkpoint_every; u64 seed
//! f64 lattice origin[3]; f64 lattice spacing; f64 d_max; u32 epoch
//! u32 tensor_count
//! ```
//!
//! followed by every trainable tensor and then every batch-norm running
//! statistic, in declaration order, each as `u32 rank`, `u32 dims[rank]`
//! and `f32` data.

use std::path::Path;

use latent_glider_core::learner::{Architecture, LearnerConfig, LearnerParams, TensorSpec, UpdateRule};
use latent_glider_core::sdf::GridSpec;
use latent_glider_core::Vec3;

use super::{put_f32s, put_f64, put_u32, put_u64, to_u32, LeReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VSL1";

/// Trained parameters together with the target normalization they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFile {
    pub params: LearnerParams,
    pub d_max: f64,
    /// Completed training epochs.
    pub epoch: usize,
}

fn put_config(out: &mut Vec<u8>, c: &LearnerConfig) -> Result<(), String> {
    for r in c.resolution {
        put_u32(out, to_u32(r, "resolution")?);
    }
    for v in [c.global_dim, c.local_codes, c.local_dim, c.fc_width] {
        put_u32(out, to_u32(v, "latent size")?);
    }
    let layers = c.channels.len();
    if c.kernels.len() != layers || c.strides.len() != layers {
        return Err("channel, kernel and stride lists differ in length".into());
    }
    put_u32(out, to_u32(layers, "layer count")?);
    for l in 0..layers {
        for v in [c.channels[l], c.kernels[l], c.strides[l]] {
            put_u32(out, to_u32(v, "layer field")?);
        }
    }
    put_f64(out, c.learning_rate);
    put_u32(out, to_u32(c.batch_size, "batch size")?);
    put_u32(out, to_u32(c.epochs, "epochs")?);
    put_f64(out, c.kl_weight);
    put_f64(out, c.kl_warmup_fraction);
    put_u32(out, matches!(c.update_rule, UpdateRule::Sgd) as u32);
    put_f64(out, c.bn_momentum);
    put_f64(out, c.bn_eps);
    put_u32(out, to_u32(c.checkpoint_every, "checkpoint interval")?);
    put_u64(out, c.seed);
    Ok(())
}

fn read_config(r: &mut LeReader<'_>) -> Result<LearnerConfig, String> {
    let resolution = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let (global_dim, local_codes, local_dim, fc_width) =
        (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let layers = r.u32()? as usize;
    if layers > 64 {
        return Err(format!("implausible layer count {layers}"));
    }
    let (mut channels, mut kernels, mut strides) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..layers {
        channels.push(r.u32()? as usize);
        kernels.push(r.u32()? as usize);
        strides.push(r.u32()? as usize);
    }
    let learning_rate = r.f64()?;
    let batch_size = r.u32()? as usize;
    let epochs = r.u32()? as usize;
    let kl_weight = r.f64()?;
    let kl_warmup_fraction = r.f64()?;
    let update_rule = match r.u32()? {
        0 => UpdateRule::Adam,
        1 => UpdateRule::Sgd,
        other => return Err(format!("unknown update rule code {other}")),
    };
    Ok(LearnerConfig {
        resolution,
        global_dim,
        local_codes,
        local_dim,
        channels,
        kernels,
        strides,
        fc_width,
        learning_rate,
        batch_size,
        epochs,
        kl_weight,
        kl_warmup_fraction,
        update_rule,
        bn_momentum: r.f64()?,
        bn_eps: r.f64()?,
        checkpoint_every: r.u32()? as usize,
        seed: r.u64()?,
    })
}

fn put_tensors(out: &mut Vec<u8>, specs: &[TensorSpec], flat: &[f64]) -> Result<(), String> {
    for t in specs {
        put_u32(out, to_u32(t.shape.len(), "rank")?);
        for &d in &t.shape {
            put_u32(out, to_u32(d, "tensor dimension")?);
        }
        put_f32s(out, &flat[t.slot.range()]);
    }
    Ok(())
}

fn read_tensors(r: &mut LeReader<'_>, specs: &[TensorSpec], flat: &mut [f64]) -> Result<(), String> {
    for t in specs {
        let rank = r.u32()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if dims != t.shape {
            return Err(format!("tensor {} has shape {:?}, expected {:?}", t.name, dims, t.shape));
        }
        let values = r.f32s(t.slot.len)?;
        flat[t.slot.range()].copy_from_slice(&values);
    }
    Ok(())
}

pub fn encode_checkpoint(ck: &CheckpointFile) -> Result<Vec<u8>, String> {
    let p = &ck.params;
    let arch = &p.arch;
    let mut out = Vec::with_capacity(256 + 4 * (arch.param_len + arch.buffer_len));
    out.extend_from_slice(MAGIC);
    put_config(&mut out, p.config())?;
    for c in p.lattice.origin.to_array() {
        put_f64(&mut out, c);
    }
    put_f64(&mut out, p.lattice.spacing);
    put_f64(&mut out, ck.d_max);
    put_u32(&mut out, to_u32(ck.epoch, "epoch")?);
    put_u32(&mut out, to_u32(arch.tensors.len() + arch.buffers.len(), "tensor count")?);
    put_tensors(&mut out, &arch.tensors, &p.values)?;
    put_tensors(&mut out, &arch.buffers, &p.buffers)?;
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CheckpointFile, String> {
    let mut r = LeReader::new(bytes);
    r.magic(MAGIC)?;
    let config = read_config(&mut r)?;
    config.validate().map_err(|e| e.to_string())?;
    let origin = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
    let spacing = r.f64()?;
    let d_max = r.f64()?;
    if !(d_max > 0.0) {
        return Err("d_max must be positive".into());
    }
    let epoch = r.u32()? as usize;
    let arch = Architecture::new(&config).map_err(|e| e.to_string())?;
    let count = r.u32()? as usize;
    if count != arch.tensors.len() + arch.buffers.len() {
        return Err(format!("{count} tensors stored, architecture declares {}", arch.tensors.len() + arch.buffers.len()));
    }
    let mut values = vec![0.0; arch.param_len];
    let mut buffers = vec![0.0; arch.buffer_len];
    read_tensors(&mut r, &arch.tensors, &mut values)?;
    read_tensors(&mut r, &arch.buffers, &mut buffers)?;
    r.finish()?;
    let lattice = GridSpec { dims: config.resolution, origin, spacing };
    let params = LearnerParams::from_parts(&config, lattice, values, buffers).map_err(|e| e.to_string())?;
    Ok(CheckpointFile { params, d_max, epoch })
}

pub fn write_checkpoint(path: &Path, ck: &CheckpointFile) -> Result<()> {
    let bytes = encode_checkpoint(ck).map_err(|m| Error::format(path, m))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CheckpointFile {
        let config = LearnerConfig {
            resolution: [5; 3],
            channels: vec![2, 3],
            kernels: vec![3, 2],
            strides: vec![1, 1],
            global_dim: 3,
            local_codes: 2,
            local_dim: 2,
            fc_width: 4,
            update_rule: UpdateRule::Sgd,
            seed: 77,
            ..LearnerConfig::default()
        };
        let lattice = GridSpec { dims: [5; 3], origin: Vec3::splat(-0.5), spacing: 0.25 };
        let mut params = LearnerParams::init(&config, lattice, 3).unwrap();
        for (i, b) in params.buffers.iter_mut().enumerate() {
            *b = 0.5 + i as f64 * 0.125;
        }
        CheckpointFile { params, d_max: 1.0, epoch: 12 }
    }

    #[test]
    fn round_trip_keeps_config_and_f32_values() {
        let ck = tiny();
        let back = decode_checkpoint(&encode_checkpoint(&ck).unwrap()).unwrap();
        assert_eq!(back.params.config(), ck.params.config());
        assert_eq!(back.params.lattice, ck.params.lattice);
        assert_eq!((back.d_max, back.epoch), (1.0, 12));
        for (a, b) in ck.params.values.iter().zip(&back.params.values) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert_eq!(back.params.buffers, ck.params.buffers);
        // Once rounded, the encoding is a fixed point.
        assert_eq!(encode_checkpoint(&back).unwrap(), encode_checkpoint(&decode_checkpoint(&encode_checkpoint(&back).unwrap()).unwrap()).unwrap());
    }

    #[test]
    fn corrupted_shape_is_rejected() {
        let mut bytes = encode_checkpoint(&tiny()).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        bytes[4] = 6; // resolution no longer matches the stored lattice tensors
        assert!(decode_checkpoint(&bytes).is_err());
    }
}
