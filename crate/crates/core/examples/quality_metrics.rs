//! PSNR, SSIM and gradient sharpness on a few simple degradations.

use std::path::PathBuf;

use burstfuse::io::load_rgb_image;
use burstfuse::metrics::{psnr, sharpness, ssim};

fn main() -> burstfuse::Result<()> {
    let truth = load_rgb_image(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mcmaster_proxy/flower.png"),
    )?;
    let blurred = truth.map_channels(|p| p.gaussian_blur(1.0));
    let darker = truth.map_channels(|p| p.map(|v| v * 0.9));
    println!(
        "{:10} {:>9} {:>8} {:>10}",
        "image", "PSNR", "SSIM", "sharpness"
    );
    for (name, img) in [
        ("identical", &truth),
        ("blur 1px", &blurred),
        ("gain 0.9", &darker),
    ] {
        println!(
            "{name:10} {:6.2} dB {:8.4} {:10.6}",
            psnr(img, &truth)?,
            ssim(img, &truth)?,
            sharpness(img)
        );
    }
    Ok(())
}
