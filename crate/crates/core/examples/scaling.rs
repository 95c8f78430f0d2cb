//! Merge time per frame against pixel count, with a least-squares line.

use burstfuse::bench::{linear_fit, measure_scaling};
use burstfuse::merge::MergeConfig;

fn main() -> burstfuse::Result<()> {
    let points = measure_scaling(&[0.1, 0.25, 0.5, 1.0], 3, 2, &MergeConfig::default())?;
    for p in &points {
        println!(
            "{:5.2} MPix  {:8.1} ms per frame",
            p.megapixels, p.ms_per_frame
        );
    }
    let xy: Vec<_> = points
        .iter()
        .map(|p| (p.megapixels, p.ms_per_frame))
        .collect();
    let (a, b, r2) = linear_fit(&xy);
    println!("fit: {a:.1} ms + {b:.1} ms/MPix, R^2 = {r2:.4}");
    Ok(())
}
