//! The network graph.
//!
//! Per patch of `L = p²` pixels and `CH` bands:
//!
//! ```text
//! x_norm     = LayerNorm(x)                        [L×CH], per pixel
//! x_proj     = x_norm · W_x                        [L×D]
//! z_rev      = reverse_rows(x_norm · W_z)          [L×D]
//! x_forward  = f(conv1d(x_projᵀ, K_f))             [D×L]
//! x_backward = f(conv1d(z_revᵀ, K_b))              [D×L]
//! Δ          = softplus(delta_raw)                 [D]
//! h_forward  = tanh(x_forward  + A·Δ)              [D×L], A·Δ added to every column
//! h_backward = tanh(x_backward + B·Δ)
//! h_combined = mean_L(h_forward) + mean_L(h_backward)          [D]
//! h_spatial  = mean_L(f(conv2d(x_normᵀ as CH×p×p) + bias))     [S]
//! h_final    = concat(h_spatial, h_combined)
//! logits     = W2 · f(W1 · h_final + b1) + b2                  [K]
//! ```
//!
//! A disabled direction contributes nothing to `h_combined`; a disabled
//! branch is left out of `h_final`.

use crate::autodiff::{grad_check_with, softmax_raw, GradCheckReport, Stencil, Tape, Tensor, Var};
use crate::data::{Patch, Sample};

use super::{ModelConfig, ModelError, ModelParams};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Tape handles for every parameter, in serialization order.
#[derive(Clone, Copy, Debug)]
pub struct ParamVars(pub [Var; 15]);

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        ParamVars(params.tensors().map(|t| tape.leaf(t.clone())))
    }

    pub fn norm_gain(&self) -> Var {
        self.0[0]
    }
    pub fn norm_bias(&self) -> Var {
        self.0[1]
    }
    pub fn w_x(&self) -> Var {
        self.0[2]
    }
    pub fn w_z(&self) -> Var {
        self.0[3]
    }
    pub fn conv_forward(&self) -> Var {
        self.0[4]
    }
    pub fn conv_backward(&self) -> Var {
        self.0[5]
    }
    pub fn a(&self) -> Var {
        self.0[6]
    }
    pub fn b(&self) -> Var {
        self.0[7]
    }
    pub fn delta_raw(&self) -> Var {
        self.0[8]
    }
    pub fn spatial_kernels(&self) -> Var {
        self.0[9]
    }
    pub fn spatial_bias(&self) -> Var {
        self.0[10]
    }
    pub fn w1(&self) -> Var {
        self.0[11]
    }
    pub fn b1(&self) -> Var {
        self.0[12]
    }
    pub fn w2(&self) -> Var {
        self.0[13]
    }
    pub fn b2(&self) -> Var {
        self.0[14]
    }
}

/// Tape nodes of the bidirectional block.
#[derive(Clone, Copy, Debug, Default)]
pub struct BiVars {
    pub x_proj: Option<Var>,
    pub z_proj_reversed: Option<Var>,
    pub x_forward: Option<Var>,
    pub x_backward: Option<Var>,
    pub h_forward: Option<Var>,
    pub h_backward: Option<Var>,
    /// `None` when both directions are disabled.
    pub h_combined: Option<Var>,
}

/// Tape nodes of one full forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub x_norm: Var,
    pub bi: BiVars,
    pub h_spatial: Option<Var>,
    pub h_final: Var,
    pub logits: Var,
}

/// Per-pixel layer norm of a `[L×CH]` sequence.
pub fn normalize_input(tape: &mut Tape, x: Var, pv: &ParamVars) -> Result<Var, ModelError> {
    Ok(tape.layer_norm(x, pv.norm_gain(), pv.norm_bias(), LAYER_NORM_EPS)?)
}

/// Linear forward and backward projections, each `[L×D]`.
pub fn project(tape: &mut Tape, x_norm: Var, pv: &ParamVars) -> Result<(Var, Var), ModelError> {
    let x_proj = tape.matmul(x_norm, pv.w_x())?;
    let z_proj = tape.matmul(x_norm, pv.w_z())?;
    Ok((x_proj, z_proj))
}

/// Reverses the sequence axis of a `[L×D]` tensor.
pub fn reverse_spectral(tape: &mut Tape, z_proj: Var) -> Result<Var, ModelError> {
    Ok(tape.reverse_rows(z_proj)?)
}

/// One direction: conv, activation, modulated tanh. Returns `(x_dir, h_dir)`.
fn direction(
    tape: &mut Tape,
    seq: Var,
    kernel: Var,
    transform: Var,
    delta: Var,
    config: &ModelConfig,
) -> Result<(Var, Var), ModelError> {
    let channels_first = tape.transpose(seq)?;
    let conv = tape.conv1d(channels_first, kernel)?;
    let x_dir = tape.activation(config.activation, conv);
    let modulation = tape.matvec(transform, delta)?;
    let pre = tape.add_col_vector(x_dir, modulation)?;
    let h_dir = tape.tanh(pre);
    Ok((x_dir, h_dir))
}

pub fn bi_network(tape: &mut Tape, x_norm: Var, pv: &ParamVars, config: &ModelConfig) -> Result<BiVars, ModelError> {
    let mut out = BiVars::default();
    if !config.spectral_on() {
        return Ok(out);
    }
    let delta = tape.softplus(pv.delta_raw());
    let mut reduced = Vec::with_capacity(2);
    if config.forward_on {
        let x_proj = tape.matmul(x_norm, pv.w_x())?;
        let (x_f, h_f) = direction(tape, x_proj, pv.conv_forward(), pv.a(), delta, config)?;
        reduced.push(tape.mean_over_cols(h_f)?);
        out.x_proj = Some(x_proj);
        out.x_forward = Some(x_f);
        out.h_forward = Some(h_f);
    }
    if config.backward_on {
        let z_proj = tape.matmul(x_norm, pv.w_z())?;
        let z_rev = reverse_spectral(tape, z_proj)?;
        let (x_b, h_b) = direction(tape, z_rev, pv.conv_backward(), pv.b(), delta, config)?;
        reduced.push(tape.mean_over_cols(h_b)?);
        out.z_proj_reversed = Some(z_rev);
        out.x_backward = Some(x_b);
        out.h_backward = Some(h_b);
    }
    out.h_combined = Some(match reduced[..] {
        [one] => one,
        [f, b] => tape.add(f, b)?,
        _ => unreachable!("at least one direction is on"),
    });
    Ok(out)
}

/// 2-D convolution over the normalized patch, activation, global average pool.
pub fn spatial_branch(tape: &mut Tape, x_norm: Var, pv: &ParamVars, config: &ModelConfig) -> Result<Var, ModelError> {
    if !config.spatial_on {
        return Err(ModelError::Contract("spatial branch is disabled".into()));
    }
    let p = config.patch;
    let planes = tape.transpose(x_norm)?;
    let cube = tape.reshape(planes, &[config.bands, p, p])?;
    let conv = tape.conv2d(cube, pv.spatial_kernels())?;
    let flat = tape.reshape(conv, &[config.spatial_channels, p * p])?;
    let biased = tape.add_col_vector(flat, pv.spatial_bias())?;
    let act = tape.activation(config.activation, biased);
    Ok(tape.mean_over_cols(act)?)
}

pub fn classifier(tape: &mut Tape, features: Var, pv: &ParamVars, config: &ModelConfig) -> Result<Var, ModelError> {
    let h = tape.matvec(pv.w1(), features)?;
    let h = tape.add(h, pv.b1())?;
    let h = tape.activation(config.activation, h);
    let logits = tape.matvec(pv.w2(), h)?;
    Ok(tape.add(logits, pv.b2())?)
}

fn check_patch(patch: &Patch, config: &ModelConfig) -> Result<(), ModelError> {
    if patch.size != config.patch || patch.bands != config.bands {
        return Err(ModelError::PatchMismatch {
            expected: (config.patch, config.bands),
            found: (patch.size, patch.bands),
        });
    }
    Ok(())
}

/// Records the whole network for `patch` on `tape`.
pub fn build_forward(
    tape: &mut Tape,
    pv: &ParamVars,
    patch: &Patch,
    config: &ModelConfig,
) -> Result<ForwardVars, ModelError> {
    check_patch(patch, config)?;
    let x = tape.leaf(Tensor::new(&[config.seq_len(), config.bands], patch.data.clone())?);
    let x_norm = normalize_input(tape, x, pv)?;
    let bi = bi_network(tape, x_norm, pv, config)?;
    let h_spatial = if config.spatial_on {
        Some(spatial_branch(tape, x_norm, pv, config)?)
    } else {
        None
    };
    let parts: Vec<Var> = h_spatial.into_iter().chain(bi.h_combined).collect();
    let h_final = tape.concat(&parts)?;
    let logits = classifier(tape, h_final, pv, config)?;
    Ok(ForwardVars {
        x_norm,
        bi,
        h_spatial,
        h_final,
        logits,
    })
}

/// Intermediate values of one forward pass. Ablated stages are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `[L×CH]`
    pub x_norm: Tensor,
    /// `[L×D]`
    pub x_proj: Option<Tensor>,
    /// `[L×D]`
    pub z_proj_reversed: Option<Tensor>,
    /// `[D×L]`
    pub x_forward: Option<Tensor>,
    /// `[D×L]`
    pub x_backward: Option<Tensor>,
    /// `[D×L]`
    pub h_forward: Option<Tensor>,
    /// `[D×L]`
    pub h_backward: Option<Tensor>,
    /// `[D]`, zeros when both directions are off.
    pub h_combined: Tensor,
    /// `[S]`
    pub h_spatial: Option<Tensor>,
    pub h_final: Tensor,
    pub logits: Tensor,
    pub probabilities: Tensor,
}

/// Class probabilities for `patch`, plus every intermediate activation.
pub fn model_forward(
    patch: &Patch,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<(Tensor, ForwardTrace), ModelError> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let fv = build_forward(&mut tape, &pv, patch, config)?;
    let get = |v: Option<Var>| v.map(|v| tape.value(v).clone());
    let logits = tape.value(fv.logits).clone();
    let probabilities = Tensor::vector(softmax_raw(logits.data()));
    let trace = ForwardTrace {
        x_norm: tape.value(fv.x_norm).clone(),
        x_proj: get(fv.bi.x_proj),
        z_proj_reversed: get(fv.bi.z_proj_reversed),
        x_forward: get(fv.bi.x_forward),
        x_backward: get(fv.bi.x_backward),
        h_forward: get(fv.bi.h_forward),
        h_backward: get(fv.bi.h_backward),
        h_combined: get(fv.bi.h_combined).unwrap_or_else(|| Tensor::zeros(&[config.hidden])),
        h_spatial: get(fv.h_spatial),
        h_final: tape.value(fv.h_final).clone(),
        logits,
        probabilities: probabilities.clone(),
    };
    Ok((probabilities, trace))
}

pub fn logits(patch: &Patch, params: &ModelParams, config: &ModelConfig) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let fv = build_forward(&mut tape, &pv, patch, config)?;
    Ok(tape.value(fv.logits).clone())
}

/// 1-based index of the largest score; ties go to the lowest class.
pub fn argmax_class(scores: &[f64]) -> u16 {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    (best + 1) as u16
}

pub fn predict(patch: &Patch, params: &ModelParams, config: &ModelConfig) -> Result<u16, ModelError> {
    Ok(argmax_class(logits(patch, params, config)?.data()))
}

/// Result of one forward/backward pass over a labeled sample.
#[derive(Clone, Debug)]
pub struct Backprop {
    pub loss: f64,
    pub logits: Tensor,
    /// Gradient of every parameter, in serialization order.
    pub grads: Vec<Tensor>,
}

/// Cross-entropy of one sample and the gradient of every parameter.
pub fn loss_and_gradients(sample: &Sample, params: &ModelParams, config: &ModelConfig) -> Result<Backprop, ModelError> {
    if sample.label == 0 || sample.label as usize > config.classes {
        return Err(ModelError::Contract(format!(
            "label {} outside 1..={}",
            sample.label, config.classes
        )));
    }
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let fv = build_forward(&mut tape, &pv, &sample.patch, config)?;
    let loss = tape.cross_entropy_logits(fv.logits, sample.label as usize - 1)?;
    let mut grads = tape.backward(loss)?;
    let grads = pv
        .0
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    Ok(Backprop {
        loss: tape.value(loss).item(),
        logits: tape.value(fv.logits).clone(),
        grads,
    })
}

/// `h_combined` for an already normalized `[L×CH]` sequence.
pub fn bi_network_forward(x_norm: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let x = tape.leaf(x_norm.clone());
    let bi = bi_network(&mut tape, x, &pv, config)?;
    Ok(bi
        .h_combined
        .map(|v| tape.value(v).clone())
        .unwrap_or_else(|| Tensor::zeros(&[config.hidden])))
}

/// `h_spatial` for an already normalized `[L×CH]` sequence.
pub fn spatial_forward(x_norm: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor, ModelError> {
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let x = tape.leaf(x_norm.clone());
    let h = spatial_branch(&mut tape, x, &pv, config)?;
    Ok(tape.value(h).clone())
}

/// Layer-normalized `[L×CH]` sequence of a patch.
pub fn normalize_patch(patch: &Patch, params: &ModelParams, config: &ModelConfig) -> Result<Tensor, ModelError> {
    check_patch(patch, config)?;
    let mut tape = Tape::new();
    let pv = ParamVars::register(&mut tape, params);
    let x = tape.leaf(Tensor::new(&[config.seq_len(), config.bands], patch.data.clone())?);
    let n = normalize_input(&mut tape, x, &pv)?;
    Ok(tape.value(n).clone())
}

/// End-to-end check of every parameter gradient of the cross-entropy loss on
/// one random patch against central differences with step `h`.
pub fn gradient_check(
    config: &ModelConfig,
    seed: u64,
    h: f64,
    stencil: Stencil,
) -> Result<GradCheckReport, ModelError> {
    use rand::Rng;

    let params = ModelParams::init(config, seed)?;
    let mut rng = crate::rng::stream_rng(seed, 0x4752_4144);
    let n = config.seq_len() * config.bands;
    let patch = Patch::new(config.patch, config.bands, (0..n).map(|_| rng.random_range(0.0..1.0)).collect())
        .map_err(|e| ModelError::Contract(e.to_string()))?;
    let label = rng.random_range(0..config.classes);
    // Non-trivial values for the parameters that start at constants.
    let mut params = params;
    for t in [
        &mut params.norm_gain,
        &mut params.norm_bias,
        &mut params.delta_raw,
        &mut params.spatial_bias,
        &mut params.b1,
        &mut params.b2,
    ] {
        for v in t.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let inputs: Vec<Tensor> = params.tensors().iter().map(|t| (*t).clone()).collect();
    let report = grad_check_with(&inputs, h, stencil, |tape, vars| {
        let pv = ParamVars(vars.try_into().expect("15 parameter vars"));
        let fv = build_forward(tape, &pv, &patch, config).map_err(|e| match e {
            ModelError::Tensor(t) => t,
            other => crate::autodiff::TensorError::Contract(other.to_string()),
        })?;
        tape.cross_entropy_logits(fv.logits, label)
    })?;
    Ok(report)
}
