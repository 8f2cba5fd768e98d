//! Hyperspectral cubes, label rasters, their file formats, and the sample
//! pipeline: synthesis, stratified splitting, patch extraction, augmentation.

mod cube;
mod io;
mod patch;
mod split;
mod synth;

pub use cube::{HsiCube, LabelRaster};
pub use io::{
    decode_cube, decode_labels, encode_cube, encode_labels, load_cube, load_labels, write_cube,
    write_labels, CUBE_MAGIC, LABEL_MAGIC,
};
pub(crate) use io::{parse_dims, take_line};
pub use patch::{
    augment, augment_sample, extract_patch, flip_horizontal, flip_vertical, patch_source_coords,
    reflect_index, rot90, rotate_nearest, AugmentOptions, Patch, Sample,
};
pub use split::{split_samples, train_count, ClassSplit, Coord, SplitSpec};
pub use synth::{class_spectrum, peak_band, stripe_class, synthesize_cube, SynthSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("bad magic: expected `{expected}`, found `{found}`")]
    Magic { expected: String, found: String },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} unexpected bytes after payload")]
    TrailingBytes(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("bad dimensions: {0}")]
    Dimensions(String),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Extracts the labeled patch centered at `coord`.
pub fn sample_at(cube: &HsiCube, labels: &LabelRaster, coord: Coord, p: usize) -> Result<Sample, DataError> {
    let label = labels.get(coord.0, coord.1);
    if label == 0 {
        return Err(DataError::Contract(format!(
            "pixel ({}, {}) is unlabeled",
            coord.0, coord.1
        )));
    }
    Ok(Sample {
        patch: extract_patch(cube, coord.0, coord.1, p)?,
        label,
    })
}
