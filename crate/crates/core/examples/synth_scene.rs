//! Writes a striped synthetic scene to disk and prints its class layout.
//!
//! cargo run --example synth_scene -- [out_dir] [seed]

use std::error::Error;
use std::path::PathBuf;

use ssnl::data::{load_cube, synthesize_cube, write_cube, write_labels, SynthSpec};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let spec = SynthSpec {
        rows: 48,
        cols: 48,
        bands: 24,
        classes: 4,
        noise_sigma: 0.05,
        seed,
    };
    let (cube, labels) = synthesize_cube(&spec)?;
    let (cube_path, labels_path) = (dir.join("synthetic.cube"), dir.join("synthetic.labels"));
    write_cube(&cube_path, &cube)?;
    write_labels(&labels_path, &labels)?;

    // the file holds f32 values; reading back gives the stored cube
    let back = load_cube(&cube_path)?;
    println!("{} x {} x {} written to {}", back.rows(), back.cols(), back.bands(), cube_path.display());
    println!("class counts: {:?}", labels.class_counts());
    for r in (0..labels.rows()).step_by(6) {
        let row: String = (0..labels.cols()).map(|c| char::from(b'0' + labels.get(r, c) as u8)).collect();
        println!("row {r:>2}  {row}");
    }
    let center = cube.spectrum(labels.rows() / 2, labels.cols() / 2);
    println!(
        "center spectrum: {}",
        center.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" ")
    );
    Ok(())
}
