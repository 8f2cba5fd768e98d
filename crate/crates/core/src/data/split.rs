use rand::seq::SliceRandom;

use super::{DataError, LabelRaster};
use crate::rng::{stream_rng, STREAM_SPLIT};

pub type Coord = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSplit {
    pub class: u16,
    pub train: Vec<Coord>,
    pub test: Vec<Coord>,
}

/// Stratified train/test partition of the labeled pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub ratio: f64,
    pub classes: Vec<ClassSplit>,
    /// Classes in `1..=K` with no labeled pixels.
    pub skipped: Vec<u16>,
}

/// Training samples for a class of `n` pixels: `max(1, floor(ratio·n))`.
///
/// The product gets a 1e-9 allowance so values such as `0.29·100` that land
/// just under an integer in binary floating point still floor to it.
pub fn train_count(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n)
}

impl SplitSpec {
    pub fn train_coords(&self) -> Vec<(Coord, u16)> {
        self.classes
            .iter()
            .flat_map(|c| c.train.iter().map(move |&p| (p, c.class)))
            .collect()
    }

    pub fn test_coords(&self) -> Vec<(Coord, u16)> {
        self.classes
            .iter()
            .flat_map(|c| c.test.iter().map(move |&p| (p, c.class)))
            .collect()
    }

    pub fn train_len(&self) -> usize {
        self.classes.iter().map(|c| c.train.len()).sum()
    }

    pub fn test_len(&self) -> usize {
        self.classes.iter().map(|c| c.test.len()).sum()
    }
}

/// Per class: shuffle its pixels with a generator derived from `(seed, class)`,
/// then assign the first [`train_count`] to training and the rest to test.
pub fn split_samples(labels: &LabelRaster, ratio: f64, seed: u64) -> Result<SplitSpec, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let k = labels.num_classes();
    let mut per_class: Vec<Vec<Coord>> = vec![Vec::new(); k];
    for r in 0..labels.rows() {
        for c in 0..labels.cols() {
            let l = labels.get(r, c);
            if l > 0 {
                per_class[l as usize - 1].push((r, c));
            }
        }
    }
    let mut classes = Vec::new();
    let mut skipped = Vec::new();
    for (i, mut coords) in per_class.into_iter().enumerate() {
        let class = (i + 1) as u16;
        if coords.is_empty() {
            log::warn!("class {class} has no labeled pixels; skipped");
            skipped.push(class);
            continue;
        }
        coords.shuffle(&mut stream_rng(seed, STREAM_SPLIT ^ class as u64));
        let n_train = train_count(coords.len(), ratio);
        let test = coords.split_off(n_train);
        classes.push(ClassSplit {
            class,
            train: coords,
            test,
        });
    }
    Ok(SplitSpec {
        seed,
        ratio,
        classes,
        skipped,
    })
}
