//! The bidirectional spectral-spatial classifier: configuration, parameters,
//! forward graph and checkpoints.

mod checkpoint;
mod config;
mod forward;
mod params;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, ensure_compatible, load_model, save_model, CHECKPOINT_MAGIC,
};
pub use config::{ModelConfig, DEFAULT_CLASSIFIER_HIDDEN, DEFAULT_HIDDEN, DEFAULT_SPATIAL_CHANNELS};
pub use forward::{
    argmax_class, bi_network, gradient_check, bi_network_forward, build_forward, classifier, logits, loss_and_gradients,
    model_forward, normalize_input, normalize_patch, predict, project, reverse_spectral, spatial_branch,
    spatial_forward, Backprop, BiVars, ForwardTrace, ForwardVars, ParamVars, LAYER_NORM_EPS,
};
pub use params::{param_shapes, ModelParams, PARAM_NAMES};

use crate::autodiff::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("patch is {}x{} with {} bands, model expects {}x{} with {} bands",
        found.0, found.0, found.1, expected.0, expected.0, expected.1)]
    PatchMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("model expects {model} bands but the data has {data}")]
    BandMismatch { model: usize, data: usize },
    #[error("not a checkpoint: magic `{found}`")]
    Magic { found: String },
    #[error("unsupported checkpoint version `{0}`")]
    Version(String),
    #[error("malformed checkpoint header: {0}")]
    Header(String),
    #[error("parameter `{name}`: expected shape {expected:?}, found {found:?}")]
    ParamShape {
        name: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
