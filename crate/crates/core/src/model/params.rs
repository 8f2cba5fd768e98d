use rand::distr::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::rng::{stream_rng, STREAM_INIT};

use super::{ModelConfig, ModelError};

/// Every learnable tensor of the network.
///
/// The field order below is the serialization order, see [`PARAM_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Layer-norm gain over the bands, `[CH]`.
    pub norm_gain: Tensor,
    /// Layer-norm bias, `[CH]`.
    pub norm_bias: Tensor,
    /// Forward projection `[CH×D]`.
    pub w_x: Tensor,
    /// Backward projection `[CH×D]`.
    pub w_z: Tensor,
    /// Depthwise kernels of the forward path, `[D×k1]`.
    pub conv_forward: Tensor,
    /// Depthwise kernels of the backward path, `[D×k1]`.
    pub conv_backward: Tensor,
    /// Forward state transform `[D×D]`.
    pub a: Tensor,
    /// Backward state transform `[D×D]`.
    pub b: Tensor,
    /// Modulation before softplus, `[D]`.
    pub delta_raw: Tensor,
    /// `[S×CH×k2×k2]`.
    pub spatial_kernels: Tensor,
    /// `[S]`.
    pub spatial_bias: Tensor,
    /// Classifier hidden layer `[Hc×F]`, `F` the feature width.
    pub w1: Tensor,
    pub b1: Tensor,
    /// Output layer `[K×Hc]`.
    pub w2: Tensor,
    pub b2: Tensor,
}

pub const PARAM_NAMES: [&str; 15] = [
    "norm_gain",
    "norm_bias",
    "w_x",
    "w_z",
    "conv_forward",
    "conv_backward",
    "a",
    "b",
    "delta_raw",
    "spatial_kernels",
    "spatial_bias",
    "w1",
    "b1",
    "w2",
    "b2",
];

/// Shapes of every parameter for `config`, in serialization order.
pub fn param_shapes(config: &ModelConfig) -> [Vec<usize>; 15] {
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
    [
        vec![ch],
        vec![ch],
        vec![ch, d],
        vec![ch, d],
        vec![d, k1],
        vec![d, k1],
        vec![d, d],
        vec![d, d],
        vec![d],
        vec![s, ch, k2, k2],
        vec![s],
        vec![hc, config.feature_width()],
        vec![hc],
        vec![k, hc],
        vec![k],
    ]
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new(-bound, bound).expect("bound is positive");
    let n: usize = shape.iter().product();
    let mut t = Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("shape");
    t.round_to_f32();
    t
}

impl ModelParams {
    /// Weights uniform in ±1/√fan_in, gains one, biases and `delta_raw` zero.
    /// Values are rounded to `f32` so checkpoints round-trip exactly.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let shapes = param_shapes(config);
        let mut rng = stream_rng(seed, STREAM_INIT);
        let ch = config.bands;
        let d = config.hidden;
        let k2 = config.conv2d_kernel;
        Ok(ModelParams {
            norm_gain: Tensor::ones(&shapes[0]),
            norm_bias: Tensor::zeros(&shapes[1]),
            w_x: uniform(&mut rng, &shapes[2], ch),
            w_z: uniform(&mut rng, &shapes[3], ch),
            conv_forward: uniform(&mut rng, &shapes[4], config.conv1d_kernel),
            conv_backward: uniform(&mut rng, &shapes[5], config.conv1d_kernel),
            a: uniform(&mut rng, &shapes[6], d),
            b: uniform(&mut rng, &shapes[7], d),
            delta_raw: Tensor::zeros(&shapes[8]),
            spatial_kernels: uniform(&mut rng, &shapes[9], ch * k2 * k2),
            spatial_bias: Tensor::zeros(&shapes[10]),
            w1: uniform(&mut rng, &shapes[11], config.feature_width()),
            b1: Tensor::zeros(&shapes[12]),
            w2: uniform(&mut rng, &shapes[13], config.classifier_hidden),
            b2: Tensor::zeros(&shapes[14]),
        })
    }

    pub fn tensors(&self) -> [&Tensor; 15] {
        [
            &self.norm_gain,
            &self.norm_bias,
            &self.w_x,
            &self.w_z,
            &self.conv_forward,
            &self.conv_backward,
            &self.a,
            &self.b,
            &self.delta_raw,
            &self.spatial_kernels,
            &self.spatial_bias,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 15] {
        [
            &mut self.norm_gain,
            &mut self.norm_bias,
            &mut self.w_x,
            &mut self.w_z,
            &mut self.conv_forward,
            &mut self.conv_backward,
            &mut self.a,
            &mut self.b,
            &mut self.delta_raw,
            &mut self.spatial_kernels,
            &mut self.spatial_bias,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    /// Rebuilds params from tensors in serialization order, checking shapes.
    pub fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        let shapes = param_shapes(config);
        if tensors.len() != shapes.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, shape), name) in tensors.iter().zip(&shapes).zip(PARAM_NAMES) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name,
                    expected: shape.clone(),
                    found: t.shape().to_vec(),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked");
        Ok(ModelParams {
            norm_gain: next(),
            norm_bias: next(),
            w_x: next(),
            w_z: next(),
            conv_forward: next(),
            conv_backward: next(),
            a: next(),
            b: next(),
            delta_raw: next(),
            spatial_kernels: next(),
            spatial_bias: next(),
            w1: next(),
            b1: next(),
            w2: next(),
            b2: next(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}
