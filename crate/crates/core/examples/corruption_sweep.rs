//! Oracle alignment fields are corrupted (random tile replacement and
//! Gaussian vector noise) and the merged PSNR is tracked per level.

use std::path::PathBuf;

use burstfuse::bench::{
    corruption_config_id, default_corruption_specs, load_dataset, run_corruption_bench,
    BenchConfig, CONFIG_SINGLE,
};

fn main() -> burstfuse::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/kodak_proxy");
    let ds = load_dataset(&dir, Some(128))?;
    let cfg = BenchConfig {
        frames: 8,
        ..BenchConfig::default()
    };
    let specs = default_corruption_specs(cfg.seed);
    let report = run_corruption_bench(&ds, &specs, &cfg)?;
    for spec in &specs {
        let id = corruption_config_id(spec);
        let (p, s) = report.mean(&id).expect("row present");
        println!("{id:24} {p:6.2} dB  SSIM {s:.4}");
    }
    let (p, _) = report.mean(CONFIG_SINGLE).expect("row present");
    println!("{CONFIG_SINGLE:24} {p:6.2} dB");
    Ok(())
}
