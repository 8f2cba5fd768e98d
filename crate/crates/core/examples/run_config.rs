//! Parses a run configuration, applies overrides and shows the resulting
//! model and training settings.
//!
//! cargo run --example run_config -- [config_file] [key=value ...]

use std::error::Error;

use ssnl::cli::RunConfig;

const SAMPLE: &str = "\
# quick experiment
patch = 7
hidden = 16
epochs = 50
learning_rate = 1e-3
diagonal_rotations = false
";

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let mut rc = match args.next() {
        Some(path) => RunConfig::from_text(&std::fs::read_to_string(path)?)?,
        None => RunConfig::from_text(SAMPLE)?,
    };
    for kv in args {
        rc.apply_override(&kv)?;
    }
    print!("{rc}");
    let model = rc.model_config(144, 15);
    model.validate()?;
    println!("\nmodel: {model}");
    println!("training: {:?}", rc.train_config());
    Ok(())
}
