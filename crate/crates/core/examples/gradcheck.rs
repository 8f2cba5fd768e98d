//! Compares analytic gradients of the full model with finite differences,
//! per parameter tensor.
//!
//! cargo run --release --example gradcheck -- [seed]

use std::error::Error;

use ssnl::autodiff::Stencil;
use ssnl::cli::gradcheck_config;
use ssnl::model::{gradient_check, PARAM_NAMES};

fn main() -> Result<(), Box<dyn Error>> {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = gradcheck_config();
    println!("model: {config}");
    for (stencil, step) in [(Stencil::ThreePoint, 1e-6), (Stencil::FivePoint, 1e-3)] {
        let r = gradient_check(&config, seed, step, stencil)?;
        let worst = r.worst_at.map_or("-".to_string(), |(t, i)| format!("{}[{i}]", PARAM_NAMES[t]));
        println!(
            "{stencil:?} h={step:e}: {} coordinates, max relative error {:.3e} at {worst}",
            r.coordinates, r.max_rel_error
        );
    }
    Ok(())
}
