//! Accuracy report for a hand-made confusion matrix.
//!
//! cargo run --example metrics_table

use std::error::Error;

use ssnl::metrics::ConfusionMatrix;

fn main() -> Result<(), Box<dyn Error>> {
    // rows are ground truth, columns predictions
    let cm = ConfusionMatrix::from_rows(&[vec![45, 5], vec![15, 35]])?;
    print!("{}", cm.render_table(Some(&["grass".to_string(), "road".to_string()])));

    let mut cm = ConfusionMatrix::new(3)?;
    for (truth, pred, times) in [(1, 1, 40), (1, 2, 2), (2, 2, 30), (3, 3, 8), (3, 1, 4)] {
        for _ in 0..times {
            cm.record(truth, pred)?;
        }
    }
    println!();
    print!("{}", cm.render_table(None));
    println!("per-class accuracy: {:?}", cm.per_class_accuracy());
    Ok(())
}
