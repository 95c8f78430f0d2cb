//! A square moves in one frame of an otherwise static scene; the robustness
//! mask of that frame drops where the content disagrees with the base.

use burstfuse::align::AlignmentField;
use burstfuse::io::write_heatmap_png;
use burstfuse::noise::{calibrated_tables, tuning_for_snr, NoiseParams, DEFAULT_TABLE_SEED};
use burstfuse::raw::{build_guide_image, decimate_luma, mosaic_rggb, BayerFrame};
use burstfuse::robust::{compute_robustness, RobustnessConfig};
use burstfuse::synth::BlobScene;

fn main() -> burstfuse::Result<()> {
    let side = 128;
    let scene = BlobScene::new(side, side, 80, 5).render(side, side);
    let mut moved = scene.clone();
    for y in 40..72 {
        for x in 40..72 {
            moved.set(x, y, [0.9, 0.1, 0.1]);
        }
    }
    let base = BayerFrame::from_plane(mosaic_rggb(&scene))?;
    let frame = BayerFrame::from_plane(mosaic_rggb(&moved))?;

    let noise = NoiseParams::new(1e-4, 1e-6)?;
    let tables = calibrated_tables(noise, 64, 20_000, DEFAULT_TABLE_SEED, None);
    let tune = tuning_for_snr(30.0);
    let field = AlignmentField::zeros(side, side, tune.tile_size, 1);
    let mask = compute_robustness(
        &build_guide_image(&base),
        &build_guide_image(&frame),
        &decimate_luma(&frame),
        &field,
        &tables,
        &tune,
        &RobustnessConfig::default(),
    );

    let (inside, outside) = {
        let v = &mask.values;
        let (mut si, mut ni, mut so, mut no) = (0.0, 0, 0.0, 0);
        for y in 0..v.height() {
            for x in 0..v.width() {
                // half-res square spans 20..36; keep a margin for the 5x5 minimum
                if (18..38).contains(&x) && (18..38).contains(&y) {
                    si += v.get(x, y) as f64;
                    ni += 1;
                } else if !(14..42).contains(&x) || !(14..42).contains(&y) {
                    so += v.get(x, y) as f64;
                    no += 1;
                }
            }
        }
        (si / ni as f64, so / no as f64)
    };
    println!("mean confidence on the moved square {inside:.3}, elsewhere {outside:.3}");

    let out = std::env::temp_dir().join("burstfuse-examples");
    std::fs::create_dir_all(&out).map_err(|e| burstfuse::Error::io(&out, e))?;
    write_heatmap_png(&mask.values, &out.join("robustness.png"))?;
    println!("mask written to {}", out.join("robustness.png").display());
    Ok(())
}
