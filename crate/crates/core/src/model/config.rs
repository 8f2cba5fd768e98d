use std::fmt;

use crate::autodiff::Activation;

use super::ModelError;

/// Architecture hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Spectral bands per pixel.
    pub bands: usize,
    /// Patch side length (odd).
    pub patch: usize,
    /// Width of the forward/backward projections.
    pub hidden: usize,
    pub conv1d_kernel: usize,
    pub spatial_channels: usize,
    pub conv2d_kernel: usize,
    pub classifier_hidden: usize,
    pub classes: usize,
    /// Non-linearity after the 1-D convolutions, the spatial convolution and
    /// the classifier hidden layer. The state update always uses tanh.
    pub activation: Activation,
    pub forward_on: bool,
    pub backward_on: bool,
    pub spatial_on: bool,
}

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_SPATIAL_CHANNELS: usize = 32;
pub const DEFAULT_CLASSIFIER_HIDDEN: usize = 128;

impl ModelConfig {
    pub fn new(bands: usize, patch: usize, classes: usize) -> Self {
        ModelConfig {
            bands,
            patch,
            hidden: DEFAULT_HIDDEN,
            conv1d_kernel: 3,
            spatial_channels: DEFAULT_SPATIAL_CHANNELS,
            conv2d_kernel: 3,
            classifier_hidden: DEFAULT_CLASSIFIER_HIDDEN,
            classes,
            activation: Activation::Silu,
            forward_on: true,
            backward_on: true,
            spatial_on: true,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("bands", self.bands),
            ("patch", self.patch),
            ("hidden", self.hidden),
            ("conv1d_kernel", self.conv1d_kernel),
            ("spatial_channels", self.spatial_channels),
            ("conv2d_kernel", self.conv2d_kernel),
            ("classifier_hidden", self.classifier_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [
            ("patch", self.patch),
            ("conv1d_kernel", self.conv1d_kernel),
            ("conv2d_kernel", self.conv2d_kernel),
        ] {
            if v % 2 == 0 {
                return Err(ModelError::Config(format!("{name} must be odd, got {v}")));
            }
        }
        if self.classes < 2 {
            return Err(ModelError::Config(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if !(self.forward_on || self.backward_on || self.spatial_on) {
            return Err(ModelError::Config(
                "forward, backward and spatial branches are all disabled".into(),
            ));
        }
        Ok(())
    }

    /// Pixels per patch, the sequence length `L = p²`.
    pub fn seq_len(&self) -> usize {
        self.patch * self.patch
    }

    pub fn spectral_on(&self) -> bool {
        self.forward_on || self.backward_on
    }

    /// Width of the concatenated feature vector fed to the classifier.
    pub fn feature_width(&self) -> usize {
        let spatial = if self.spatial_on { self.spatial_channels } else { 0 };
        let spectral = if self.spectral_on() { self.hidden } else { 0 };
        spatial + spectral
    }

    /// Space-separated field list used in checkpoints, in [`Self::FIELDS`] order.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {} {} {} {} {} {} {}",
            self.bands,
            self.patch,
            self.hidden,
            self.conv1d_kernel,
            self.spatial_channels,
            self.conv2d_kernel,
            self.classifier_hidden,
            self.classes,
            self.activation.name(),
            self.forward_on as u8,
            self.backward_on as u8,
            self.spatial_on as u8,
        )
    }

    pub const FIELDS: [&'static str; 12] = [
        "bands",
        "patch",
        "hidden",
        "conv1d_kernel",
        "spatial_channels",
        "conv2d_kernel",
        "classifier_hidden",
        "classes",
        "activation",
        "forward",
        "backward",
        "spatial",
    ];

    pub fn from_line(line: &str) -> Result<Self, ModelError> {
        let f: Vec<&str> = line.split(' ').collect();
        if f.len() != Self::FIELDS.len() {
            return Err(ModelError::Header(format!(
                "config line needs {} fields, got {}",
                Self::FIELDS.len(),
                f.len()
            )));
        }
        let num = |i: usize| -> Result<usize, ModelError> {
            f[i].parse()
                .map_err(|_| ModelError::Header(format!("bad {} `{}`", Self::FIELDS[i], f[i])))
        };
        let flag = |i: usize| -> Result<bool, ModelError> {
            match f[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(ModelError::Header(format!("bad {} flag `{other}`", Self::FIELDS[i]))),
            }
        };
        let cfg = ModelConfig {
            bands: num(0)?,
            patch: num(1)?,
            hidden: num(2)?,
            conv1d_kernel: num(3)?,
            spatial_channels: num(4)?,
            conv2d_kernel: num(5)?,
            classifier_hidden: num(6)?,
            classes: num(7)?,
            activation: f[8]
                .parse()
                .map_err(|_| ModelError::Header(format!("bad activation `{}`", f[8])))?,
            forward_on: flag(9)?,
            backward_on: flag(10)?,
            spatial_on: flag(11)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "CH={} p={} D={} k1={} S={} k2={} Hc={} K={} f={} fwd={} bwd={} spatial={}",
            self.bands,
            self.patch,
            self.hidden,
            self.conv1d_kernel,
            self.spatial_channels,
            self.conv2d_kernel,
            self.classifier_hidden,
            self.classes,
            self.activation.name(),
            self.forward_on,
            self.backward_on,
            self.spatial_on
        )
    }
}
