//! `key=value` run configuration shared by the subcommands.
//!
//! One entry per line, `#` starts a comment, blank lines are ignored.
//! Unknown keys are rejected. Values given on the command line with
//! `--set key=value` override the file.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::Activation;
use crate::data::AugmentOptions;
use crate::model::ModelConfig;
use crate::train::{EarlyStopping, TrainConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Value(String),
}

/// Every model, training and split setting, in echo order.
pub const KEYS: [&str; 25] = [
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
    "batch_size",
    "learning_rate",
    "epochs",
    "beta1",
    "beta2",
    "adam_eps",
    "seed",
    "augment",
    "diagonal_rotations",
    "early_stopping",
    "clip_norm",
    "log_interval",
    "ratio",
    "split_seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub patch: usize,
    pub hidden: usize,
    pub conv1d_kernel: usize,
    pub spatial_channels: usize,
    pub conv2d_kernel: usize,
    pub classifier_hidden: usize,
    /// 0 takes the class count from the label raster.
    pub classes: usize,
    pub activation: Activation,
    pub forward: bool,
    pub backward: bool,
    pub spatial: bool,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub augment: bool,
    pub diagonal_rotations: bool,
    pub early_stopping: bool,
    pub clip_norm: Option<f64>,
    pub log_interval: usize,
    pub ratio: f64,
    pub split_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1, 5, 2);
        let t = TrainConfig::default();
        RunConfig {
            patch: m.patch,
            hidden: m.hidden,
            conv1d_kernel: m.conv1d_kernel,
            spatial_channels: m.spatial_channels,
            conv2d_kernel: m.conv2d_kernel,
            classifier_hidden: m.classifier_hidden,
            classes: 0,
            activation: m.activation,
            forward: true,
            backward: true,
            spatial: true,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            beta1: t.beta1,
            beta2: t.beta2,
            adam_eps: t.adam_eps,
            seed: t.seed,
            augment: t.augment,
            diagonal_rotations: t.augment_options.diagonal_rotations,
            early_stopping: false,
            clip_norm: None,
            log_interval: 0,
            ratio: 0.10,
            split_seed: 0,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean `{value}` for `{key}`")),
    }
}

impl RunConfig {
    /// Assigns one key. The error message names the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key.trim() {
            "patch" => self.patch = parse_num(key, v)?,
            "hidden" => self.hidden = parse_num(key, v)?,
            "conv1d_kernel" => self.conv1d_kernel = parse_num(key, v)?,
            "spatial_channels" => self.spatial_channels = parse_num(key, v)?,
            "conv2d_kernel" => self.conv2d_kernel = parse_num(key, v)?,
            "classifier_hidden" => self.classifier_hidden = parse_num(key, v)?,
            "classes" => self.classes = parse_num(key, v)?,
            "activation" => self.activation = v.parse().map_err(|e| format!("{e}"))?,
            "forward" => self.forward = parse_bool(key, v)?,
            "backward" => self.backward = parse_bool(key, v)?,
            "spatial" => self.spatial = parse_bool(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "epochs" => self.epochs = parse_num(key, v)?,
            "beta1" => self.beta1 = parse_num(key, v)?,
            "beta2" => self.beta2 = parse_num(key, v)?,
            "adam_eps" => self.adam_eps = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "diagonal_rotations" => self.diagonal_rotations = parse_bool(key, v)?,
            "early_stopping" => self.early_stopping = parse_bool(key, v)?,
            "clip_norm" => {
                self.clip_norm = match v {
                    "none" | "off" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "log_interval" => self.log_interval = parse_num(key, v)?,
            "ratio" => self.ratio = parse_num(key, v)?,
            "split_seed" => self.split_seed = parse_num(key, v)?,
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    /// Applies a config file's contents on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Line { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, found `{line}`")))?;
            self.set(k, v).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Applies a `key=value` override from the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Value(format!("expected key=value, found `{kv}`")))?;
        self.set(k, v).map_err(ConfigError::Value)
    }

    pub fn model_config(&self, bands: usize, classes: usize) -> ModelConfig {
        ModelConfig {
            bands,
            patch: self.patch,
            hidden: self.hidden,
            conv1d_kernel: self.conv1d_kernel,
            spatial_channels: self.spatial_channels,
            conv2d_kernel: self.conv2d_kernel,
            classifier_hidden: self.classifier_hidden,
            classes: if self.classes > 0 { self.classes } else { classes },
            activation: self.activation,
            forward_on: self.forward,
            backward_on: self.backward,
            spatial_on: self.spatial,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            seed: self.seed,
            augment: self.augment,
            augment_options: AugmentOptions {
                diagonal_rotations: self.diagonal_rotations,
            },
            log_interval: self.log_interval,
            early_stopping: self.early_stopping.then(EarlyStopping::default),
            clip_norm: self.clip_norm,
        }
    }

    /// `key=value` for every key in [`KEYS`] order; parses back to `self`.
    pub fn echo(&self) -> Vec<String> {
        let b = |v: bool| if v { "true" } else { "false" };
        let values = [
            self.patch.to_string(),
            self.hidden.to_string(),
            self.conv1d_kernel.to_string(),
            self.spatial_channels.to_string(),
            self.conv2d_kernel.to_string(),
            self.classifier_hidden.to_string(),
            self.classes.to_string(),
            self.activation.name().to_string(),
            b(self.forward).into(),
            b(self.backward).into(),
            b(self.spatial).into(),
            self.batch_size.to_string(),
            format!("{:?}", self.learning_rate),
            self.epochs.to_string(),
            format!("{:?}", self.beta1),
            format!("{:?}", self.beta2),
            format!("{:?}", self.adam_eps),
            self.seed.to_string(),
            b(self.augment).into(),
            b(self.diagonal_rotations).into(),
            b(self.early_stopping).into(),
            self.clip_norm.map_or("none".into(), |c| format!("{c:?}")),
            self.log_interval.to_string(),
            format!("{:?}", self.ratio),
            self.split_seed.to_string(),
        ];
        KEYS.iter().zip(values).map(|(k, v)| format!("{k}={v}")).collect()
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.echo() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_with_comments() {
        let c = RunConfig::from_text("# run\nepochs = 3\n\nhidden=8 # narrow\nactivation=tanh\nclip_norm=5\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.hidden, 8);
        assert_eq!(c.activation, Activation::Tanh);
        assert_eq!(c.clip_norm, Some(5.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = RunConfig::from_text("epochs=3\n\nbogus=1\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::Line {
                line: 3,
                message: "unknown key `bogus`".into()
            }
        );
        let e = RunConfig::from_text("epochs=three").unwrap_err();
        assert!(e.to_string().starts_with("line 1:"), "{e}");
        assert!(RunConfig::from_text("epochs").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("learning_rate=0.001\nspatial=off\nclip_norm=2.5\nseed=9").unwrap();
        let back = RunConfig::from_text(&c.to_string()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.echo().len(), KEYS.len());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::from_text("epochs=3").unwrap();
        c.apply_override("epochs=5").unwrap();
        assert_eq!(c.epochs, 5);
        assert!(c.apply_override("nope").is_err());
        assert!(c.apply_override("nope=1").is_err());
    }

    #[test]
    fn builds_configs() {
        let c = RunConfig::default();
        let m = c.model_config(24, 4);
        assert_eq!((m.bands, m.patch, m.classes), (24, 5, 4));
        assert_eq!(c.train_config(), TrainConfig::default());
    }
}
