//! Merges one synthetic burst three ways (automatic alignment, oracle
//! alignment, 2x zoom) and compares against the single-frame demosaic.
//!
//! ```text
//! cargo run --release --example merge_burst
//! ```

use std::path::PathBuf;

use burstfuse::bench::{score, SyntheticCase};
use burstfuse::io::{load_rgb_image, save_rgb16_png};
use burstfuse::merge::{merge_burst, merge_burst_with_alignment, AlignmentMode, MergeConfig};
use burstfuse::raw::bilinear_demosaic_baseline;

fn main() -> burstfuse::Result<()> {
    let truth = load_rgb_image(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/kodak_proxy/astronaut.png"),
    )?;
    let case = SyntheticCase::new(&truth, 15, 2.0, 42)?;
    let out_dir = std::env::temp_dir().join("burstfuse-examples");
    std::fs::create_dir_all(&out_dir).map_err(|e| burstfuse::Error::io(&out_dir, e))?;

    let demosaic = bilinear_demosaic_baseline(case.burst.base());
    let (p, s, _) = score(&demosaic, &truth, 8)?;
    println!("bilinear demosaic of the base frame   {p:6.2} dB  SSIM {s:.4}");

    let auto = merge_burst(&case.burst, &MergeConfig::default())?;
    let (p, s, _) = score(&auto.image, &truth, 8)?;
    println!("15 frames, automatic alignment        {p:6.2} dB  SSIM {s:.4}");
    for f in auto.diagnostics.frames.iter().take(4) {
        println!(
            "  frame {}: mean |v| {:.2} px, mean confidence {:.3}",
            f.frame, f.mean_abs_v, f.mean_mask
        );
    }

    let oracle_cfg = MergeConfig {
        alignment: AlignmentMode::Oracle,
        ..MergeConfig::default()
    };
    let fields = case.oracle_fields(auto.diagnostics.tuning.tile_size);
    let oracle = merge_burst_with_alignment(&case.burst, &oracle_cfg, Some(&fields))?;
    let (p, s, _) = score(&oracle.image, &truth, 8)?;
    println!("15 frames, oracle alignment           {p:6.2} dB  SSIM {s:.4}");

    let zoomed = merge_burst(
        &case.burst,
        &MergeConfig {
            zoom: 2.0,
            ..MergeConfig::default()
        },
    )?;
    println!(
        "2x zoom output: {}x{}",
        zoomed.image.width(),
        zoomed.image.height()
    );

    save_rgb16_png(&auto.image, &out_dir.join("merged_auto.png"))?;
    save_rgb16_png(&zoomed.image, &out_dir.join("merged_x2.png"))?;
    save_rgb16_png(&demosaic, &out_dir.join("demosaic.png"))?;
    println!("images written to {}", out_dir.display());
    Ok(())
}
