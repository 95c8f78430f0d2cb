//! Turns a ground-truth RGB image into a burst of shifted RGGB mosaics and
//! writes it as a burst directory that `burstfuse merge` reads.
//!
//! ```text
//! cargo run --release --example synthesize_burst -- [truth.png] [out_dir]
//! ```

use std::path::PathBuf;

use burstfuse::io::{load_rgb_image, save_burst_dir};
use burstfuse::noise::NoiseParams;
use burstfuse::synth::{generate_burst_offsets, synthesize_burst_with, SynthOptions};

fn main() -> burstfuse::Result<()> {
    let mut args = std::env::args().skip(1);
    let truth_path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/kodak_proxy/chelsea.png")
    });
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("burstfuse-examples/burst"));

    let truth = load_rgb_image(&truth_path)?;
    let offsets = generate_burst_offsets(15, 2.0, 7);
    let opts = SynthOptions {
        noise: Some(NoiseParams::new(2e-4, 1e-6)?),
        noise_seed: 1,
    };
    let burst = synthesize_burst_with(&truth, &offsets, &opts)?;

    std::fs::create_dir_all(&out).map_err(|e| burstfuse::Error::io(&out, e))?;
    save_burst_dir(&burst, &out)?;
    offsets.write_csv(&out.join("offsets.csv"))?;

    println!(
        "{} frames of {}x{} written to {}",
        burst.len(),
        burst.dims().0,
        burst.dims().1,
        out.display()
    );
    for (i, o) in offsets.offsets.iter().enumerate().take(5) {
        println!("  frame {i:2}: offset ({:+.3}, {:+.3}) px", o[0], o[1]);
    }
    println!("  ...");
    Ok(())
}
