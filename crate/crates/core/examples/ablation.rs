//! Trains the full model and its three ablations on one synthetic scene.
//!
//! cargo run --release --example ablation -- [seed] [epochs]

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
    let cfg = TrainConfig {
        epochs,
        seed,
        ..TrainConfig::default()
    };

    println!("{:<22}{:>10}{:>10}{:>12}{:>12}", "variant", "OA", "kappa", "first loss", "last loss");
    for (name, f, b, s) in [
        ("full", true, true, true),
        ("forward + spatial", true, false, true),
        ("backward + spatial", false, true, true),
        ("spectral only", true, true, false),
    ] {
        let mut model = ModelConfig::new(cube.bands(), 5, 4);
        (model.forward_on, model.backward_on, model.spatial_on) = (f, b, s);
        let (_, report) = train(&cube, &labels, &split, &model, &cfg)?;
        let cm = report.test_confusion.as_ref().expect("test split is non-empty");
        println!(
            "{name:<22}{:>10.4}{:>10.4}{:>12.5}{:>12.5}",
            cm.overall_accuracy()?,
            cm.kappa()?,
            report.epoch_loss[0],
            report.epoch_loss.last().unwrap()
        );
    }
    Ok(())
}
