//! Trains the full model on a striped synthetic scene and reports test metrics.
//!
//! cargo run --release --example train_synthetic -- [seed] [epochs]

use std::error::Error;

use ssnl::data::{split_samples, synthesize_cube, SynthSpec};
use ssnl::model::ModelConfig;
use ssnl::train::{train, TrainConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);

    let (cube, labels) = synthesize_cube(&SynthSpec {
        rows: 48,
        cols: 48,
        bands: 24,
        classes: 4,
        noise_sigma: 0.05,
        seed,
    })?;
    let cube = cube.scale_bands();
    let split = split_samples(&labels, 0.10, seed)?;
    let model = ModelConfig::new(cube.bands(), 5, 4);
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };
    println!("model: {model}");
    println!("train pixels: {}, test pixels: {}", split.train_len(), split.test_len());

    let (_params, report) = train(&cube, &labels, &split, &model, &cfg)?;
    for (i, (loss, oa)) in report.epoch_loss.iter().zip(&report.epoch_train_oa).enumerate() {
        println!("epoch {:>3}  loss {loss:.5}  train OA {oa:.4}", i + 1);
    }
    let cm = report.test_confusion.as_ref().expect("test split is non-empty");
    print!("{}", cm.render_table(None));
    println!("train {:.1}s, test {:.1}s", report.train_seconds, report.test_seconds);
    Ok(())
}
