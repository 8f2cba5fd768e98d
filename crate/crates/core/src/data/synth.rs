use rand_distr::{Distribution, Normal};

use super::{DataError, HsiCube, LabelRaster};
use crate::rng::{stream_rng, STREAM_SYNTH};

/// Parameters of a striped synthetic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub bands: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Class of a row: `K` horizontal stripes of (nearly) equal height.
pub fn stripe_class(row: usize, rows: usize, classes: usize) -> u16 {
    (row * classes / rows + 1) as u16
}

/// Band at which the spectrum of `class` peaks.
pub fn peak_band(class: usize, bands: usize, classes: usize) -> f64 {
    class as f64 * bands as f64 / (classes as f64 + 1.0)
}

/// Noise-free reflectance of `class` at `band`: a Gaussian bump of unit height.
pub fn class_spectrum(class: usize, band: usize, bands: usize, classes: usize) -> f64 {
    let width = (bands as f64 / (2.0 * (classes as f64 + 1.0))).max(1.0);
    let d = band as f64 - peak_band(class, bands, classes);
    (-d * d / (2.0 * width * width)).exp()
}

/// Deterministic striped scene: every pixel is labeled, class `c` owns the
/// `c`-th horizontal stripe, and its spectrum is the class bump plus i.i.d.
/// Gaussian noise.
pub fn synthesize_cube(spec: &SynthSpec) -> Result<(HsiCube, LabelRaster), DataError> {
    let SynthSpec {
        rows,
        cols,
        bands,
        classes,
        noise_sigma,
        seed,
    } = *spec;
    if rows == 0 || cols == 0 || bands == 0 {
        return Err(DataError::Dimensions(format!(
            "synthetic cube dimensions must be positive, got {rows}x{cols}x{bands}"
        )));
    }
    if classes < 1 || classes > rows {
        return Err(DataError::Config(format!(
            "need 1 <= classes <= rows, got classes={classes} rows={rows}"
        )));
    }
    if bands < classes {
        return Err(DataError::Config(format!(
            "need bands >= classes, got bands={bands} classes={classes}"
        )));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(DataError::Config(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }

    let labels: Vec<u16> = (0..rows)
        .flat_map(|r| std::iter::repeat_n(stripe_class(r, rows, classes), cols))
        .collect();
    let mut rng = stream_rng(seed, STREAM_SYNTH);
    let noise = Normal::new(0.0, noise_sigma).expect("sigma checked above");
    let mut values = Vec::with_capacity(rows * cols * bands);
    for b in 0..bands {
        for &label in &labels {
            let clean = class_spectrum(label as usize, b, bands, classes);
            let n = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            values.push(clean + n);
        }
    }
    Ok((
        HsiCube::new(rows, cols, bands, values)?,
        LabelRaster::new(rows, cols, labels)?,
    ))
}
