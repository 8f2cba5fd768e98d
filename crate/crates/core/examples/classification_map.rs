//! Trains briefly on a small synthetic scene and writes a colored
//! classification map next to the ground truth.
//!
//! cargo run --release --example classification_map -- [out_dir] [epochs]

use std::error::Error;
use std::path::PathBuf;

use ssnl::cli::{encode_ppm, predict_map};
use ssnl::data::{split_samples, synthesize_cube, SynthSpec};
use ssnl::model::ModelConfig;
use ssnl::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(10);

    let (cube, labels) = synthesize_cube(&SynthSpec {
        rows: 32,
        cols: 32,
        bands: 16,
        classes: 5,
        noise_sigma: 0.08,
        seed: 3,
    })?;
    let cube = cube.scale_bands();
    let split = split_samples(&labels, 0.10, 3)?;
    let model = ModelConfig::new(cube.bands(), 5, 5);
    let cfg = TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::default()
    };
    let (params, report) = train(&cube, &labels, &split, &model, &cfg)?;
    if let Some(cm) = &report.test_confusion {
        println!("test OA {:.4}, kappa {:.4}", cm.overall_accuracy()?, cm.kappa()?);
    }

    let predicted = predict_map(&cube, &params, &model, None)?;
    let wrong = predicted.iter().zip(labels.labels()).filter(|(p, t)| p != t).count();
    println!("{wrong} of {} pixels differ from the ground truth", predicted.len());
    for (name, classes) in [("predicted.ppm", &predicted[..]), ("truth.ppm", labels.labels())] {
        let path = dir.join(name);
        std::fs::write(&path, encode_ppm(classes, cube.rows(), cube.cols(), model.classes, name))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
