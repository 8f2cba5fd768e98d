//! Exact parameter and multiply-accumulate counts for the model, and the
//! leading-order cost expressions of transformer, CNN and bidirectional
//! state-update families.
//!
//! Parameter count (every tensor is allocated regardless of ablation flags,
//! `F` the classifier input width):
//!
//! ```text
//! 2·CH + 2·CH·D + 2·D·k1 + 2·D² + D + S·CH·k2² + S + Hc·F + Hc + K·Hc + K
//! ```
//!
//! MACs per patch (`L = p²`, terms only for enabled stages):
//!
//! ```text
//! per direction   L·CH·D   projection
//!                 D·L·k1   depthwise conv, all taps including zero padding
//!                 D²       A·Δ or B·Δ
//!                 D·L      mean over the sequence
//! spatial         S·CH·k2²·L + S·L   convolution, pooling
//! classifier      Hc·F + K·Hc
//! ```
//!
//! Element-wise work (normalization, activations, bias adds, softmax) is
//! counted separately at one unit per element.

use std::fmt::Write as _;

use crate::model::{ModelConfig, ModelError};
use crate::train::TrainReport;

pub fn count_params(config: &ModelConfig) -> u64 {
    let ModelConfig {
        bands: ch,
        hidden: d,
        conv1d_kernel: k1,
        spatial_channels: s,
        conv2d_kernel: k2,
        classifier_hidden: hc,
        classes: k,
        ..
    } = *config;
    let f = config.feature_width();
    (2 * ch + 2 * ch * d + 2 * d * k1 + 2 * d * d + d + s * ch * k2 * k2 + s + hc * f + hc + k * hc + k) as u64
}

fn directions(config: &ModelConfig) -> u64 {
    config.forward_on as u64 + config.backward_on as u64
}

/// Multiply-accumulates of one patch through the network.
pub fn macs_per_patch(config: &ModelConfig) -> u64 {
    let (ch, d, l) = (config.bands as u64, config.hidden as u64, config.seq_len() as u64);
    let (k1, k2) = (config.conv1d_kernel as u64, config.conv2d_kernel as u64);
    let (s, hc, k) = (
        config.spatial_channels as u64,
        config.classifier_hidden as u64,
        config.classes as u64,
    );
    let per_direction = l * ch * d + d * l * k1 + d * d + d * l;
    let spatial = if config.spatial_on { s * ch * k2 * k2 * l + s * l } else { 0 };
    directions(config) * per_direction + spatial + hc * config.feature_width() as u64 + k * hc
}

/// Element-wise operations of one patch, one unit per element.
pub fn elementwise_per_patch(config: &ModelConfig) -> u64 {
    let (ch, d, l) = (config.bands as u64, config.hidden as u64, config.seq_len() as u64);
    let (s, hc, k) = (
        config.spatial_channels as u64,
        config.classifier_hidden as u64,
        config.classes as u64,
    );
    let norm = l * ch;
    // activation, modulation add, tanh
    let per_direction = 3 * d * l;
    let softplus = if config.spectral_on() { d } else { 0 };
    let spatial = if config.spatial_on { 2 * s * l } else { 0 };
    let head = 2 * hc + 2 * k;
    norm + directions(config) * per_direction + softplus + spatial + head
}

/// MACs for a forward pass over `batch` patches.
pub fn estimate_flops(config: &ModelConfig, batch: u64) -> Result<u64, ModelError> {
    config.validate()?;
    if batch == 0 {
        return Err(ModelError::Config("batch must be >= 1".into()));
    }
    Ok(batch * macs_per_patch(config))
}

/// Leading-order forward costs at one operating point, constants set to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FamilyComparison {
    /// `Batch·H·W·CH²`
    pub transformer: u128,
    /// `Batch·H·W·k²·CH`
    pub cnn: u128,
    /// `Batch·H·W·CH`
    pub state_update: u128,
}

impl FamilyComparison {
    pub fn transformer_ratio(&self) -> u128 {
        self.transformer / self.state_update
    }

    pub fn cnn_ratio(&self) -> u128 {
        self.cnn / self.state_update
    }
}

pub fn family_comparison(batch: u64, h: u64, w: u64, ch: u64, k: u64) -> Result<FamilyComparison, ModelError> {
    if [batch, h, w, ch, k].contains(&0) {
        return Err(ModelError::Config("family comparison needs positive arguments".into()));
    }
    let base = batch as u128 * h as u128 * w as u128;
    Ok(FamilyComparison {
        transformer: base * ch as u128 * ch as u128,
        cnn: base * k as u128 * k as u128 * ch as u128,
        state_update: base * ch as u128,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub params: u64,
    pub batch: u64,
    pub macs: u64,
    pub elementwise: u64,
    pub families: FamilyComparison,
}

impl CostReport {
    pub fn new(config: &ModelConfig, batch: u64) -> Result<Self, ModelError> {
        let p = config.patch as u64;
        Ok(CostReport {
            params: count_params(config),
            batch,
            macs: estimate_flops(config, batch)?,
            elementwise: batch * elementwise_per_patch(config),
            families: family_comparison(batch, p, p, config.bands as u64, config.conv2d_kernel as u64)?,
        })
    }

    /// FLOPs with one MAC counted as two operations.
    pub fn flops(&self) -> u64 {
        2 * self.macs
    }

    pub fn param_bytes_f32(&self) -> u64 {
        4 * self.params
    }

    /// Table with Flops, Param, training and testing time columns, followed
    /// by the family comparison. Timing columns read `-` without a report.
    pub fn render(&self, config: &ModelConfig, report: Option<&TrainReport>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# model {config}");
        let _ = writeln!(out, "batch {}", self.batch);
        let _ = writeln!(out, "params {}", self.params);
        let _ = writeln!(out, "param_bytes_f32 {}", self.param_bytes_f32());
        let _ = writeln!(out, "macs {}", self.macs);
        let _ = writeln!(out, "flops {}", self.flops());
        let _ = writeln!(out, "elementwise {}", self.elementwise);
        let (train, test) = report.map_or(("-".to_string(), "-".to_string()), |r| {
            (format!("{:.2}", r.train_seconds), format!("{:.2}", r.test_seconds))
        });
        let _ = writeln!(
            out,
            "\n{:<12}{:>12}{:>12}{:>12}{:>16}{:>16}",
            "Method", "Flops (G)", "Param (M)", "Param (MB)", "Training (s)", "Testing (s)"
        );
        let _ = writeln!(
            out,
            "{:<12}{:>12.6}{:>12.6}{:>12.6}{:>16}{:>16}",
            "ssnl",
            self.flops() as f64 / 1e9,
            self.params as f64 / 1e6,
            self.param_bytes_f32() as f64 / (1024.0 * 1024.0),
            train,
            test
        );
        let f = &self.families;
        let _ = writeln!(out, "\n{:<14}{:>24}{:>10}", "Family", "Batch·H·W cost", "÷ SS");
        let _ = writeln!(out, "{:<14}{:>24}{:>10}", "transformer", f.transformer, f.transformer_ratio());
        let _ = writeln!(out, "{:<14}{:>24}{:>10}", "cnn", f.cnn, f.cnn_ratio());
        let _ = writeln!(out, "{:<14}{:>24}{:>10}", "ss-nonlinear", f.state_update, 1);
        out
    }
}
