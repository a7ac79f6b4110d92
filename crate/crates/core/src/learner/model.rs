use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // float methods come from libm under no_std
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::{
    bn_apply, bn_backward, bn_batch_stats, conv_backward, conv_forward, deconv_backward, deconv_forward,
    dense_backward, dense_forward, relu_backward, relu_in_place, sigmoid, volume, BnStats,
};
use super::params::{Gradients, Head, LearnerParams, Slot};
use super::{LatentVector, LearnerError, NormalizedGrid};

/// Probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` inside the
/// cross-entropy.
const P_CLAMP: f64 = 1e-7;

/// Log-variances pass through `L·tanh(raw / L)`, so a runaway head cannot
/// overflow the reparameterization or the codes it conditions.
const LOGVAR_BOUND: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    /// Posterior means.
    Deterministic,
    /// Reparameterized draws from a seeded standard-normal stream.
    Sampled { seed: u64 },
}

/// Batch-mean loss terms. `kl` is unweighted; `total` applies the weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum BnMode {
    Batch,
    Running,
}

/// Per-layer caches are indexed `[layer][sample]`.
pub(crate) struct EncoderPass {
    pre: Vec<Vec<Vec<f64>>>,
    xhat: Vec<Vec<Vec<f64>>>,
    out: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<Option<BnStats>>,
}

struct LocalCache {
    u: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
}

struct CodeCache {
    mu: Vec<f64>,
    logvar: Vec<f64>,
    eps: Vec<f64>,
    z: Vec<f64>,
    locals: Vec<LocalCache>,
}

pub(crate) struct DecoderPass {
    fc_pre: Vec<Vec<f64>>,
    fc_out: Vec<Vec<f64>>,
    pre: Vec<Vec<Vec<f64>>>,
    xhat: Vec<Vec<Vec<f64>>>,
    /// Post-normalization activations; the last layer holds probabilities.
    out: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<Option<BnStats>>,
}

struct BnResult {
    stats: Option<BnStats>,
    xhat: Vec<Vec<f64>>,
    out: Vec<Vec<f64>>,
}

fn batch_norm(
    mode: BnMode,
    acts: &[Vec<f64>],
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> BnResult {
    let stats = match mode {
        BnMode::Batch => {
            let refs: Vec<&[f64]> = acts.iter().map(Vec::as_slice).collect();
            Some(bn_batch_stats(&refs, channels, spatial, eps))
        }
        BnMode::Running => None,
    };
    let (mean, inv_std): (Vec<f64>, Vec<f64>) = match &stats {
        Some(s) => (s.mean.clone(), s.inv_std.clone()),
        None => (running_mean.to_vec(), running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect()),
    };
    let mut xhat = Vec::with_capacity(acts.len());
    let mut out = Vec::with_capacity(acts.len());
    for a in acts {
        let mut xh = vec![0.0; a.len()];
        let mut o = vec![0.0; a.len()];
        bn_apply(a, channels, spatial, &mean, &inv_std, gamma, beta, &mut o, Some(&mut xh));
        xhat.push(xh);
        out.push(o);
    }
    BnResult { stats, xhat, out }
}

fn check_input(p: &LearnerParams, grid: &NormalizedGrid) -> Result<(), LearnerError> {
    if grid.spec.dims != p.arch.config.resolution || grid.values.len() != volume(grid.spec.dims) {
        return Err(LearnerError::Shape("grid resolution does not match learner config"));
    }
    Ok(())
}

fn check_finite(values: &[Vec<f64>], what: &'static str) -> Result<(), LearnerError> {
    for (index, v) in values.iter().enumerate() {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LearnerError::Divergence { index, what });
        }
    }
    Ok(())
}

pub(crate) fn encoder_forward(p: &LearnerParams, inputs: &[&[f64]], mode: BnMode) -> Result<EncoderPass, LearnerError> {
    let arch = &p.arch;
    let eps = arch.config.bn_eps;
    let mut pass = EncoderPass { pre: Vec::new(), xhat: Vec::new(), out: Vec::new(), stats: Vec::new() };
    for (l, layer) in arch.encoder.iter().enumerate() {
        let sh = layer.shape;
        let sv = volume(sh.small);
        let mut pre = Vec::with_capacity(inputs.len());
        let mut act = Vec::with_capacity(inputs.len());
        for b in 0..inputs.len() {
            let x: &[f64] = if l == 0 { inputs[b] } else { &pass.out[l - 1][b] };
            let mut o = vec![0.0; sh.c_out * sv];
            conv_forward(&sh, x, p.p(layer.w), p.p(layer.b), &mut o);
            let mut r = o.clone();
            relu_in_place(&mut r);
            pre.push(o);
            act.push(r);
        }
        let bn = batch_norm(
            mode,
            &act,
            sh.c_out,
            sv,
            p.p(layer.gamma),
            p.p(layer.beta),
            p.buf(layer.running_mean),
            p.buf(layer.running_var),
            eps,
        );
        check_finite(&bn.out, "encoder activation")?;
        pass.pre.push(pre);
        pass.xhat.push(bn.xhat);
        pass.out.push(bn.out);
        pass.stats.push(bn.stats);
    }
    Ok(pass)
}

fn head_forward(p: &LearnerParams, head: &Head, x: &[f64], mu: &mut [f64], logvar: &mut [f64]) {
    dense_forward(p.p(head.mean_w), p.p(head.mean_b), x, mu);
    dense_forward(p.p(head.logvar_w), p.p(head.logvar_b), x, logvar);
    for l in logvar.iter_mut() {
        *l = LOGVAR_BOUND * (*l / LOGVAR_BOUND).tanh();
    }
}

fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64], z: &mut [f64]) {
    for i in 0..z.len() {
        z[i] = mu[i] + (0.5 * logvar[i]).exp() * eps[i];
    }
}

fn code_forward(p: &LearnerParams, feature: &[f64], first: &[f64], eps: Vec<f64>) -> CodeCache {
    let arch = &p.arch;
    let cfg = &arch.config;
    let (g, d, w) = (cfg.global_dim, cfg.local_dim, cfg.fc_width);
    let spatial0 = volume(arch.encoder[0].shape.small);
    let pool: Vec<f64> = first.chunks_exact(spatial0).map(|c| c.iter().sum::<f64>() / spatial0 as f64).collect();
    let n = cfg.latent_len();
    let (mut mu, mut logvar, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    head_forward(p, &arch.global, feature, &mut mu[..g], &mut logvar[..g]);
    reparameterize(&mu[..g], &logvar[..g], &eps[..g], &mut z[..g]);
    let mut locals = Vec::with_capacity(arch.locals.len());
    for (i, block) in arch.locals.iter().enumerate() {
        let mut u = Vec::with_capacity(block.in_dim);
        u.extend_from_slice(&z[..g]);
        u.extend_from_slice(&pool);
        if i > 0 {
            u.extend_from_slice(&z[g + (i - 1) * d..g + i * d]);
        }
        let mut a1 = vec![0.0; w];
        dense_forward(p.p(block.fc1_w), p.p(block.fc1_b), &u, &mut a1);
        let mut h1 = a1.clone();
        relu_in_place(&mut h1);
        let mut a2 = vec![0.0; w];
        dense_forward(p.p(block.fc2_w), p.p(block.fc2_b), &h1, &mut a2);
        let mut h2 = a2.clone();
        relu_in_place(&mut h2);
        let r = g + i * d..g + (i + 1) * d;
        head_forward(p, &block.head, &h2, &mut mu[r.clone()], &mut logvar[r.clone()]);
        reparameterize(&mu[r.clone()], &logvar[r.clone()], &eps[r.clone()], &mut z[r]);
        locals.push(LocalCache { u, a1, h1, a2, h2 });
    }
    CodeCache { mu, logvar, eps, z, locals }
}

pub(crate) fn decoder_forward(p: &LearnerParams, zs: &[&[f64]], mode: BnMode) -> Result<DecoderPass, LearnerError> {
    let arch = &p.arch;
    let eps = arch.config.bn_eps;
    let mut pass = DecoderPass {
        fc_pre: Vec::new(),
        fc_out: Vec::new(),
        pre: Vec::new(),
        xhat: Vec::new(),
        out: Vec::new(),
        stats: Vec::new(),
    };
    for z in zs {
        let mut a = vec![0.0; arch.feature_len];
        dense_forward(p.p(arch.dec_fc_w), p.p(arch.dec_fc_b), z, &mut a);
        let mut h = a.clone();
        relu_in_place(&mut h);
        pass.fc_pre.push(a);
        pass.fc_out.push(h);
    }
    for (j, layer) in arch.decoder.iter().enumerate() {
        let sh = layer.shape;
        let bv = volume(sh.big);
        let mut pre = Vec::with_capacity(zs.len());
        for b in 0..zs.len() {
            let x: &[f64] = if j == 0 { &pass.fc_out[b] } else { &pass.out[j - 1][b] };
            let mut o = vec![0.0; sh.c_out * bv];
            deconv_forward(&sh, x, p.p(layer.w), p.p(layer.b), &mut o);
            pre.push(o);
        }
        match &layer.bn {
            Some(bn) => {
                let act: Vec<Vec<f64>> = pre
                    .iter()
                    .map(|o| {
                        let mut r = o.clone();
                        relu_in_place(&mut r);
                        r
                    })
                    .collect();
                let res = batch_norm(
                    mode,
                    &act,
                    sh.c_out,
                    bv,
                    p.p(bn.gamma),
                    p.p(bn.beta),
                    p.buf(bn.running_mean),
                    p.buf(bn.running_var),
                    eps,
                );
                check_finite(&res.out, "decoder activation")?;
                pass.xhat.push(res.xhat);
                pass.out.push(res.out);
                pass.stats.push(res.stats);
            }
            None => {
                check_finite(&pre, "decoder logits")?;
                pass.out.push(pre.iter().map(|o| o.iter().map(|&v| sigmoid(v)).collect()).collect());
                pass.xhat.push(Vec::new());
                pass.stats.push(None);
            }
        }
        pass.pre.push(pre);
    }
    Ok(pass)
}

fn draw_noise(p: &LearnerParams, batch: usize, seed: Option<u64>) -> Vec<Vec<f64>> {
    let n = p.arch.config.latent_len();
    match seed {
        None => vec![vec![0.0; n]; batch],
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..batch).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
        }
    }
}

fn encode_codes(
    p: &LearnerParams,
    inputs: &[&[f64]],
    mode: BnMode,
    seed: Option<u64>,
) -> Result<(EncoderPass, Vec<CodeCache>), LearnerError> {
    let enc = encoder_forward(p, inputs, mode)?;
    let last = enc.out.len() - 1;
    let noise = draw_noise(p, inputs.len(), seed);
    let mut codes = Vec::with_capacity(inputs.len());
    for (b, eps) in noise.into_iter().enumerate() {
        let c = code_forward(p, &enc.out[last][b], &enc.out[0][b], eps);
        if c.z.iter().chain(&c.logvar).any(|v| !v.is_finite()) {
            return Err(LearnerError::Divergence { index: b, what: "latent code" });
        }
        codes.push(c);
    }
    Ok((enc, codes))
}

fn to_latent(p: &LearnerParams, z: &[f64]) -> LatentVector {
    LatentVector::from_flat(z, &p.arch.config).expect("latent validated finite")
}

pub fn encode(grid: &NormalizedGrid, params: &LearnerParams, mode: EncodeMode) -> Result<LatentVector, LearnerError> {
    check_input(params, grid)?;
    let seed = match mode {
        EncodeMode::Deterministic => None,
        EncodeMode::Sampled { seed } => Some(seed),
    };
    let (_, codes) = encode_codes(params, &[&grid.values], BnMode::Running, seed)?;
    Ok(to_latent(params, &codes[0].z))
}

/// Deterministic encoding of every grid, in order.
pub fn encode_dataset(dataset: &[NormalizedGrid], params: &LearnerParams) -> Result<Vec<LatentVector>, LearnerError> {
    if dataset.is_empty() {
        return Ok(Vec::new());
    }
    for g in dataset {
        check_input(params, g)?;
    }
    let inputs: Vec<&[f64]> = dataset.iter().map(|g| g.values.as_slice()).collect();
    let (_, codes) = encode_codes(params, &inputs, BnMode::Running, None)?;
    Ok(codes.iter().map(|c| to_latent(params, &c.z)).collect())
}

pub fn decode(latent: &LatentVector, params: &LearnerParams) -> Result<NormalizedGrid, LearnerError> {
    let mut out = decode_batch(core::slice::from_ref(latent), params)?;
    Ok(out.pop().expect("one latent in, one grid out"))
}

pub fn decode_batch(latents: &[LatentVector], params: &LearnerParams) -> Result<Vec<NormalizedGrid>, LearnerError> {
    let cfg = &params.arch.config;
    let flat: Vec<Vec<f64>> = latents.iter().map(LatentVector::flatten).collect();
    for (index, (l, f)) in latents.iter().zip(&flat).enumerate() {
        if l.global.len() != cfg.global_dim
            || l.local.len() != cfg.local_codes
            || l.local.iter().any(|c| c.len() != cfg.local_dim)
        {
            return Err(LearnerError::Shape("latent layout does not match config"));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::Divergence { index, what: "latent code" });
        }
    }
    if latents.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&[f64]> = flat.iter().map(Vec::as_slice).collect();
    let pass = decoder_forward(params, &refs, BnMode::Running)?;
    let probs = pass.out.into_iter().last().expect("decoder has layers");
    Ok(probs.into_iter().map(|values| NormalizedGrid { spec: params.lattice, values }).collect())
}

/// `½ Σ (μ² + e^{logvar} − 1 − logvar)`.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu.iter().zip(logvar).map(|(m, l)| m * m + l.exp() - 1.0 - l).sum::<f64>()
}

fn bce(p: f64, t: f64) -> f64 {
    let q = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
}

/// Everything needed for the backward pass of one objective evaluation.
pub(crate) struct TrainPass {
    enc: EncoderPass,
    codes: Vec<CodeCache>,
    dec: DecoderPass,
    per_sample: Vec<(f64, f64)>,
}

impl TrainPass {
    pub fn enc_stats(&self) -> &[Option<BnStats>] {
        &self.enc.stats
    }

    pub fn dec_stats(&self) -> &[Option<BnStats>] {
        &self.dec.stats
    }

    /// `(reconstruction, kl)` per batch element.
    pub fn per_sample(&self) -> &[(f64, f64)] {
        &self.per_sample
    }
}

fn check_batch(batch: &[NormalizedGrid], params: &LearnerParams) -> Result<(), LearnerError> {
    if batch.is_empty() {
        return Err(LearnerError::Empty);
    }
    batch.iter().try_for_each(|g| check_input(params, g))
}

pub(crate) fn train_forward(
    batch: &[NormalizedGrid],
    params: &LearnerParams,
    seed: u64,
) -> Result<TrainPass, LearnerError> {
    check_batch(batch, params)?;
    let inputs: Vec<&[f64]> = batch.iter().map(|g| g.values.as_slice()).collect();
    let (enc, codes) = encode_codes(params, &inputs, BnMode::Batch, Some(seed))?;
    let zs: Vec<&[f64]> = codes.iter().map(|c| c.z.as_slice()).collect();
    let dec = decoder_forward(params, &zs, BnMode::Batch)?;
    let probs = dec.out.last().expect("decoder has layers");
    let mut per_sample = Vec::with_capacity(batch.len());
    for (b, g) in batch.iter().enumerate() {
        let recon: f64 = probs[b].iter().zip(&g.values).map(|(&p, &t)| bce(p, t)).sum();
        let kl = kl_divergence(&codes[b].mu, &codes[b].logvar);
        if !recon.is_finite() || !kl.is_finite() {
            return Err(LearnerError::Divergence { index: b, what: "loss" });
        }
        per_sample.push((recon, kl));
    }
    Ok(TrainPass { enc, codes, dec, per_sample })
}

fn breakdown(pass: &TrainPass, kl_weight: f64) -> LossBreakdown {
    let n = pass.per_sample.len() as f64;
    let reconstruction = pass.per_sample.iter().map(|s| s.0).sum::<f64>() / n;
    let kl = pass.per_sample.iter().map(|s| s.1).sum::<f64>() / n;
    LossBreakdown { reconstruction, kl, total: reconstruction + kl_weight * kl }
}

/// Negative evidence lower bound of `batch` with the configured KL weight
/// and reparameterization noise drawn from `seed`.
pub fn elbo_loss(batch: &[NormalizedGrid], params: &LearnerParams, seed: u64) -> Result<LossBreakdown, LearnerError> {
    elbo_loss_weighted(batch, params, seed, params.arch.config.kl_weight)
}

pub fn elbo_loss_weighted(
    batch: &[NormalizedGrid],
    params: &LearnerParams,
    seed: u64,
    kl_weight: f64,
) -> Result<LossBreakdown, LearnerError> {
    Ok(breakdown(&train_forward(batch, params, seed)?, kl_weight))
}

pub fn gradients(
    batch: &[NormalizedGrid],
    params: &LearnerParams,
    seed: u64,
) -> Result<(LossBreakdown, Gradients), LearnerError> {
    gradients_weighted(batch, params, seed, params.arch.config.kl_weight)
}

pub fn gradients_weighted(
    batch: &[NormalizedGrid],
    params: &LearnerParams,
    seed: u64,
    kl_weight: f64,
) -> Result<(LossBreakdown, Gradients), LearnerError> {
    let pass = train_forward(batch, params, seed)?;
    let grads = backward(batch, params, &pass, kl_weight)?;
    Ok((breakdown(&pass, kl_weight), grads))
}

/// Signs of every rectifier input and whether each output probability sits
/// inside the cross-entropy clamp. The loss is smooth in the parameters
/// wherever this pattern is locally constant.
pub fn activation_pattern(batch: &[NormalizedGrid], params: &LearnerParams, seed: u64) -> Result<Vec<bool>, LearnerError> {
    let pass = train_forward(batch, params, seed)?;
    let mut bits = Vec::new();
    let mut push = |v: &[f64]| bits.extend(v.iter().map(|&x| x > 0.0));
    for layer in &pass.enc.pre {
        layer.iter().for_each(|s| push(s));
    }
    for c in &pass.codes {
        for l in &c.locals {
            push(&l.a1);
            push(&l.a2);
        }
    }
    pass.dec.fc_pre.iter().for_each(|s| push(s));
    let last = pass.dec.pre.len() - 1;
    for layer in &pass.dec.pre[..last] {
        layer.iter().for_each(|s| push(s));
    }
    for probs in pass.dec.out.last().expect("decoder has layers") {
        bits.extend(probs.iter().map(|&p| p > P_CLAMP && p < 1.0 - P_CLAMP));
    }
    Ok(bits)
}

/// Disjoint mutable views of two gradient slots, `a` stored before `b`.
fn pair(g: &mut [f64], a: Slot, b: Slot) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.offset + a.len <= b.offset);
    let (lo, hi) = g.split_at_mut(b.offset);
    (&mut lo[a.range()], &mut hi[..b.len])
}

fn head_backward(
    p: &LearnerParams,
    head: &Head,
    x: &[f64],
    d_mu: &[f64],
    logvar: &[f64],
    d_logvar: &[f64],
    grads: &mut [f64],
    d_x: &mut [f64],
) {
    let (dw, db) = pair(grads, head.mean_w, head.mean_b);
    dense_backward(p.p(head.mean_w), x, d_mu, dw, db, Some(&mut *d_x));
    let d_raw: Vec<f64> =
        logvar.iter().zip(d_logvar).map(|(l, d)| d * (1.0 - (l / LOGVAR_BOUND) * (l / LOGVAR_BOUND))).collect();
    let (dw, db) = pair(grads, head.logvar_w, head.logvar_b);
    dense_backward(p.p(head.logvar_w), x, &d_raw, dw, db, Some(d_x));
}

pub(crate) fn backward(
    batch: &[NormalizedGrid],
    p: &LearnerParams,
    pass: &TrainPass,
    kl_weight: f64,
) -> Result<Gradients, LearnerError> {
    let arch = &p.arch;
    let cfg = &arch.config;
    let nb = batch.len();
    let scale = 1.0 / nb as f64;
    let mut grads = vec![0.0; arch.param_len];

    // Output layer: sigmoid + clamped cross-entropy.
    let probs = pass.dec.out.last().expect("decoder has layers");
    let mut d_cur: Vec<Vec<f64>> = probs
        .iter()
        .zip(batch)
        .map(|(pr, g)| {
            pr.iter()
                .zip(&g.values)
                .map(|(&q, &t)| if q > P_CLAMP && q < 1.0 - P_CLAMP { (q - t) * scale } else { 0.0 })
                .collect()
        })
        .collect();

    // Decoder, last layer first. `d_cur` holds the gradient w.r.t. the
    // layer's pre-activation once the normalization/rectifier is undone.
    for j in (0..arch.decoder.len()).rev() {
        let layer = &arch.decoder[j];
        let sh = layer.shape;
        let bv = volume(sh.big);
        if let (Some(bn), Some(stats)) = (&layer.bn, &pass.dec.stats[j]) {
            let xhat: Vec<&[f64]> = pass.dec.xhat[j].iter().map(Vec::as_slice).collect();
            let d_out: Vec<&[f64]> = d_cur.iter().map(Vec::as_slice).collect();
            let mut d_in: Vec<Vec<f64>> = vec![vec![0.0; sh.c_out * bv]; nb];
            {
                let mut d_in_refs: Vec<&mut [f64]> = d_in.iter_mut().map(Vec::as_mut_slice).collect();
                let (dg, dbeta) = pair(&mut grads, bn.gamma, bn.beta);
                bn_backward(&xhat, &d_out, sh.c_out, bv, stats, p.p(bn.gamma), dg, dbeta, &mut d_in_refs);
            }
            for (d, pre) in d_in.iter_mut().zip(&pass.dec.pre[j]) {
                relu_backward(pre, d);
            }
            d_cur = d_in;
        }
        let in_len = sh.c_in * volume(sh.small);
        let mut d_prev = vec![vec![0.0; in_len]; nb];
        for b in 0..nb {
            let x: &[f64] = if j == 0 { &pass.dec.fc_out[b] } else { &pass.dec.out[j - 1][b] };
            let (dw, db) = pair(&mut grads, layer.w, layer.b);
            deconv_backward(&sh, x, p.p(layer.w), &d_cur[b], dw, db, Some(&mut d_prev[b]));
        }
        d_cur = d_prev;
    }

    // Decoder input layer back to the latent sample.
    let zl = cfg.latent_len();
    let mut d_z = vec![vec![0.0; zl]; nb];
    for b in 0..nb {
        relu_backward(&pass.dec.fc_pre[b], &mut d_cur[b]);
        let (dw, db) = pair(&mut grads, arch.dec_fc_w, arch.dec_fc_b);
        dense_backward(p.p(arch.dec_fc_w), &pass.codes[b].z, &d_cur[b], dw, db, Some(&mut d_z[b]));
    }

    // Codes, last local code first, then the global head.
    let (g, d, w) = (cfg.global_dim, cfg.local_dim, cfg.fc_width);
    let n_enc = arch.encoder.len();
    let first_sv = volume(arch.encoder[0].shape.small);
    let mut d_enc: Vec<Vec<Vec<f64>>> = arch
        .encoder
        .iter()
        .map(|l| vec![vec![0.0; l.shape.c_out * volume(l.shape.small)]; nb])
        .collect();
    for b in 0..nb {
        let c = &pass.codes[b];
        let dz = &mut d_z[b];
        let kl_scale = kl_weight * scale;
        let mut d_mu: Vec<f64> = c.mu.iter().map(|m| kl_scale * m).collect();
        let mut d_lv: Vec<f64> = c.logvar.iter().map(|l| kl_scale * 0.5 * (l.exp() - 1.0)).collect();
        let mut d_pool = vec![0.0; arch.pool_len];
        for i in (0..arch.locals.len()).rev() {
            let block = &arch.locals[i];
            let lc = &c.locals[i];
            let r = g + i * d..g + (i + 1) * d;
            for k in r.clone() {
                d_mu[k] += dz[k];
                d_lv[k] += dz[k] * 0.5 * (0.5 * c.logvar[k]).exp() * c.eps[k];
            }
            let mut d_h2 = vec![0.0; w];
            head_backward(
                p,
                &block.head,
                &lc.h2,
                &d_mu[r.clone()],
                &c.logvar[r.clone()],
                &d_lv[r.clone()],
                &mut grads,
                &mut d_h2,
            );
            relu_backward(&lc.a2, &mut d_h2);
            let mut d_h1 = vec![0.0; w];
            let (dw, db) = pair(&mut grads, block.fc2_w, block.fc2_b);
            dense_backward(p.p(block.fc2_w), &lc.h1, &d_h2, dw, db, Some(&mut d_h1));
            relu_backward(&lc.a1, &mut d_h1);
            let mut d_u = vec![0.0; block.in_dim];
            let (dw, db) = pair(&mut grads, block.fc1_w, block.fc1_b);
            dense_backward(p.p(block.fc1_w), &lc.u, &d_h1, dw, db, Some(&mut d_u));
            for k in 0..g {
                dz[k] += d_u[k];
            }
            for (dp, du) in d_pool.iter_mut().zip(&d_u[g..g + arch.pool_len]) {
                *dp += du;
            }
            if i > 0 {
                let prev = g + (i - 1) * d;
                for k in 0..d {
                    dz[prev + k] += d_u[g + arch.pool_len + k];
                }
            }
        }
        for k in 0..g {
            d_mu[k] += dz[k];
            d_lv[k] += dz[k] * 0.5 * (0.5 * c.logvar[k]).exp() * c.eps[k];
        }
        let feature = &pass.enc.out[n_enc - 1][b];
        head_backward(
            p,
            &arch.global,
            feature,
            &d_mu[..g],
            &c.logvar[..g],
            &d_lv[..g],
            &mut grads,
            &mut d_enc[n_enc - 1][b],
        );
        for (ch, dp) in d_pool.iter().enumerate() {
            let share = dp / first_sv as f64;
            for v in &mut d_enc[0][b][ch * first_sv..(ch + 1) * first_sv] {
                *v += share;
            }
        }
    }

    // Encoder, last layer first.
    for l in (0..n_enc).rev() {
        let layer = &arch.encoder[l];
        let sh = layer.shape;
        let sv = volume(sh.small);
        let stats = pass.enc.stats[l].as_ref().expect("training pass uses batch statistics");
        let xhat: Vec<&[f64]> = pass.enc.xhat[l].iter().map(Vec::as_slice).collect();
        let d_out_v = core::mem::take(&mut d_enc[l]);
        let d_out: Vec<&[f64]> = d_out_v.iter().map(Vec::as_slice).collect();
        let mut d_pre: Vec<Vec<f64>> = vec![vec![0.0; sh.c_out * sv]; nb];
        {
            let mut refs: Vec<&mut [f64]> = d_pre.iter_mut().map(Vec::as_mut_slice).collect();
            let (dg, dbeta) = pair(&mut grads, layer.gamma, layer.beta);
            bn_backward(&xhat, &d_out, sh.c_out, sv, stats, p.p(layer.gamma), dg, dbeta, &mut refs);
        }
        for b in 0..nb {
            relu_backward(&pass.enc.pre[l][b], &mut d_pre[b]);
            let (dw, db) = pair(&mut grads, layer.w, layer.b);
            if l == 0 {
                conv_backward(&sh, &batch[b].values, p.p(layer.w), &d_pre[b], dw, db, None);
            } else {
                let (lower, _) = d_enc.split_at_mut(l);
                conv_backward(&sh, &pass.enc.out[l - 1][b], p.p(layer.w), &d_pre[b], dw, db, Some(&mut lower[l - 1][b]));
            }
        }
    }

    if grads.iter().any(|v| !v.is_finite()) {
        return Err(LearnerError::Divergence { index: 0, what: "gradient" });
    }
    Ok(Gradients { values: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::LearnerConfig;
    use crate::sdf::GridSpec;

    fn tiny() -> LearnerConfig {
        LearnerConfig {
            resolution: [5; 3],
            global_dim: 2,
            local_codes: 1,
            local_dim: 2,
            channels: vec![2, 3],
            kernels: vec![3, 2],
            strides: vec![1, 1],
            fc_width: 4,
            batch_size: 2,
            ..LearnerConfig::default()
        }
    }

    fn lattice(n: usize) -> GridSpec {
        GridSpec { dims: [n; 3], origin: crate::Vec3::ZERO, spacing: 0.25 }
    }

    fn grid(spec: GridSpec, phase: f64) -> NormalizedGrid {
        let values = (0..spec.node_count()).map(|i| 0.5 + 0.45 * ((i as f64) * 0.37 + phase).sin()).collect();
        NormalizedGrid { spec, values }
    }

    #[test]
    fn zero_weights_give_bias_codes_and_constant_output() {
        let cfg = tiny();
        let mut p = LearnerParams::zeros(&cfg, lattice(5)).unwrap();
        p.tensor_mut("global.mean.bias").unwrap().copy_from_slice(&[0.3, -0.7]);
        p.tensor_mut("decoder.deconv0.bias").unwrap()[0] = 0.4;
        let z = encode(&grid(lattice(5), 0.0), &p, EncodeMode::Deterministic).unwrap();
        assert_eq!(z.global, vec![0.3, -0.7]);
        let out = decode(&z, &p).unwrap();
        assert!(out.values.iter().all(|&v| v == sigmoid(0.4)));
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl_divergence(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((kl_divergence(&[1.0], &[0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradients_are_reproducible() {
        let cfg = tiny();
        let p = LearnerParams::init(&cfg, lattice(5), 3).unwrap();
        let batch = [grid(lattice(5), 0.0), grid(lattice(5), 1.0)];
        let (l1, g1) = gradients(&batch, &p, 11).unwrap();
        let (l2, g2) = gradients(&batch, &p, 11).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(g1, g2);
    }

    #[test]
    fn gradient_matches_finite_difference_on_a_few_entries() {
        let cfg = tiny();
        let p = LearnerParams::init(&cfg, lattice(5), 5).unwrap();
        let batch = [grid(lattice(5), 0.0), grid(lattice(5), 2.0)];
        let (_, g) = gradients(&batch, &p, 7).unwrap();
        let base = activation_pattern(&batch, &p, 7).unwrap();
        let h = 1e-4;
        let mut checked = 0;
        for idx in (0..p.values.len()).step_by(7) {
            let mut plus = p.clone();
            plus.values[idx] += h;
            let mut minus = p.clone();
            minus.values[idx] -= h;
            if activation_pattern(&batch, &plus, 7).unwrap() != base
                || activation_pattern(&batch, &minus, 7).unwrap() != base
            {
                continue;
            }
            let fp = elbo_loss(&batch, &plus, 7).unwrap().total;
            let fm = elbo_loss(&batch, &minus, 7).unwrap().total;
            let num = (fp - fm) / (2.0 * h);
            let a = g.values[idx];
            let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-3);
            assert!(err < 1e-4, "param {idx}: analytic {a} numeric {num}");
            checked += 1;
        }
        assert!(checked > 20);
    }
}
