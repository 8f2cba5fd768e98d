//! `SSNLCKPT1` checkpoint files.
//!
//! ```text
//! SSNLCKPT1\n
//! <bands> <patch> <hidden> <k1> <S> <k2> <Hc> <K> <activation> <fwd> <bwd> <spatial>\n
//! then, for each tensor in `PARAM_NAMES` order:
//!   <dim> <dim> ...\n
//!   product(dims) little-endian f32 values
//! ```

use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::data::{parse_dims, take_line, DataError};

use super::{param_shapes, ModelConfig, ModelError, ModelParams, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &str = "SSNLCKPT1";
const MAGIC_STEM: &str = "SSNLCKPT";

pub fn encode_checkpoint(config: &ModelConfig, params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(config.to_line().as_bytes());
    out.push(b'\n');
    for t in params.tensors() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        out.extend_from_slice(dims.join(" ").as_bytes());
        out.push(b'\n');
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

fn header_err(e: DataError) -> ModelError {
    ModelError::Header(e.to_string())
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<(ModelConfig, ModelParams), ModelError> {
    let (magic, rest) = take_line(buf, "magic").map_err(|_| ModelError::Magic {
        found: String::from_utf8_lossy(&buf[..buf.len().min(16)]).into_owned(),
    })?;
    if magic != CHECKPOINT_MAGIC {
        if let Some(version) = magic.strip_prefix(MAGIC_STEM) {
            return Err(ModelError::Version(version.to_string()));
        }
        return Err(ModelError::Magic {
            found: magic.to_string(),
        });
    }
    let (cfg_line, mut rest) = take_line(rest, "config line").map_err(header_err)?;
    let config = ModelConfig::from_line(cfg_line)?;
    let mut tensors = Vec::with_capacity(PARAM_NAMES.len());
    for (name, expected) in PARAM_NAMES.iter().zip(param_shapes(&config)) {
        let (shape_line, after) = take_line(rest, name).map_err(|e| match e {
            DataError::Header(_) if rest.is_empty() => ModelError::Truncated(format!("missing tensor {name}")),
            e => header_err(e),
        })?;
        let found: Vec<usize> = match expected.len() {
            1 => parse_dims::<1>(shape_line, name).map(|d| d.to_vec()),
            2 => parse_dims::<2>(shape_line, name).map(|d| d.to_vec()),
            _ => parse_dims::<4>(shape_line, name).map(|d| d.to_vec()),
        }
        .map_err(|_| ModelError::ParamShape {
            name,
            expected: expected.clone(),
            found: shape_line
                .split(' ')
                .filter_map(|f| f.parse().ok())
                .collect(),
        })?;
        if found != expected {
            return Err(ModelError::ParamShape {
                name,
                expected,
                found,
            });
        }
        let n: usize = found.iter().product();
        if after.len() < n * 4 {
            return Err(ModelError::Truncated(format!(
                "tensor {name} needs {} bytes, {} left",
                n * 4,
                after.len()
            )));
        }
        let data = after[..n * 4]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        tensors.push(Tensor::new(&found, data)?);
        rest = &after[n * 4..];
    }
    if !rest.is_empty() {
        return Err(ModelError::Header(format!("{} trailing bytes after last tensor", rest.len())));
    }
    let params = ModelParams::from_tensors(&config, tensors)?;
    if !params.is_finite() {
        return Err(ModelError::NonFinite("checkpoint".into()));
    }
    Ok((config, params))
}

pub fn save_model(path: impl AsRef<Path>, config: &ModelConfig, params: &ModelParams) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(config, params)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams), ModelError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Checks a loaded model against the data it is about to run on.
pub fn ensure_compatible(config: &ModelConfig, bands: usize) -> Result<(), ModelError> {
    if config.bands != bands {
        return Err(ModelError::BandMismatch {
            model: config.bands,
            data: bands,
        });
    }
    Ok(())
}
