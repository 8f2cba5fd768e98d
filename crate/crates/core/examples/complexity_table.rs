//! Parameter and operation counts for a few model sizes, and how they grow
//! with the patch size.
//!
//! cargo run --example complexity_table -- [bands] [classes]

use std::error::Error;

use ssnl::complexity::{count_params, estimate_flops, CostReport};
use ssnl::model::ModelConfig;

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let bands: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(144);
    let classes: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(15);

    let config = ModelConfig::new(bands, 5, classes);
    print!("{}", CostReport::new(&config, 1)?.render(&config, None));

    println!("\n{:>4}{:>14}{:>16}", "p", "params", "MACs/patch");
    for p in [1, 3, 5, 7, 9, 11, 13, 15] {
        let c = ModelConfig::new(bands, p, classes);
        println!("{p:>4}{:>14}{:>16}", count_params(&c), estimate_flops(&c, 1)?);
    }

    println!("\n{:<24}{:>12}{:>14}", "variant", "params", "MACs/patch");
    for (name, f, b, s) in [
        ("full", true, true, true),
        ("forward + spatial", true, false, true),
        ("backward + spatial", false, true, true),
        ("no spatial", true, true, false),
    ] {
        let mut c = config;
        (c.forward_on, c.backward_on, c.spatial_on) = (f, b, s);
        println!("{name:<24}{:>12}{:>14}", count_params(&c), estimate_flops(&c, 1)?);
    }
    Ok(())
}
