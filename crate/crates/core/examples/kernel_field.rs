//! Inspects the anisotropic kernel field of a frame: anisotropy and
//! denoising maps, and the covariance at a flat pixel versus an edge pixel.

use std::path::PathBuf;

use burstfuse::io::{load_rgb_image, write_heatmap_png};
use burstfuse::kernel::{eigen2x2, kernel_shape_params, structure_tensor_field, KernelField};
use burstfuse::noise::tuning_for_snr;
use burstfuse::raw::{decimate_luma, mosaic_rggb, BayerFrame};

fn main() -> burstfuse::Result<()> {
    let truth = load_rgb_image(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/kodak_proxy/rocket.png"),
    )?;
    let frame = BayerFrame::from_plane(mosaic_rggb(&truth))?;
    let luma = decimate_luma(&frame);
    let tune = tuning_for_snr(30.0);

    println!("flat patch: {:?}", kernel_shape_params(0.0, 0.0, &tune));
    println!("strong edge: {:?}", kernel_shape_params(1.0, 0.0, &tune));

    let field = KernelField::from_luma(&luma, &tune);
    let tensors = structure_tensor_field(&luma);
    let (w, h) = field.dims();
    let mut strongest = (0, 0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let l = eigen2x2(&tensors.get(x, y)).lambda1;
            if l > strongest.2 {
                strongest = (x, y, l);
            }
        }
    }
    let (x, y, _) = strongest;
    let eig = eigen2x2(&tensors.get(x, y));
    println!(
        "strongest gradient at half-res ({x}, {y}): e1 = ({:.2}, {:.2}), omega = {:?}",
        eig.e1[0],
        eig.e1[1],
        field.omega_at_pixel(x, y)
    );

    let a = field.anisotropy_map();
    let d = field.denoise_map();
    println!(
        "mean anisotropy {:.3} (range 1..2), mean denoise blend {:.3}",
        1.0 + a.mean(),
        d.mean()
    );

    let out = std::env::temp_dir().join("burstfuse-examples");
    std::fs::create_dir_all(&out).map_err(|e| burstfuse::Error::io(&out, e))?;
    write_heatmap_png(&a, &out.join("anisotropy.png"))?;
    write_heatmap_png(&d, &out.join("denoise.png"))?;
    println!("heatmaps written to {}", out.display());
    Ok(())
}
