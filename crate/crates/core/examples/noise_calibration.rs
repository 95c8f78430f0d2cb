//! Monte-Carlo noise tables against the analytic noise model: the expected
//! 3x3 standard deviation is `sqrt(a * b + c)` away from the clipping ends.

use burstfuse::noise::{mc_calibrate_tables, noise_variance_at, NoiseParams};

fn main() -> burstfuse::Result<()> {
    let params = NoiseParams::new(4e-4, 2e-6)?;
    let tables = mc_calibrate_tables(params, 16, 50_000, 3);
    println!(
        "{:>10} {:>12} {:>12} {:>12}",
        "brightness", "sigma_md", "analytic", "d_md"
    );
    for ((b, s), d) in tables
        .brightness()
        .iter()
        .zip(tables.sigma_md())
        .zip(tables.d_md())
    {
        let analytic = noise_variance_at(*b, params).sqrt();
        println!("{b:10.4} {s:12.6} {analytic:12.6} {d:12.6}");
    }
    let (s, d) = tables.lookup(0.37);
    println!("interpolated at 0.37: sigma_md {s:.6}, d_md {d:.6}");
    Ok(())
}
