//! Quality of merging the first n frames, against the full-burst merge and
//! against the ground truth.

use std::path::PathBuf;

use burstfuse::bench::{
    frames_config_id, load_dataset, run_frames_sweep, BenchConfig, SweepAlignment,
};

fn main() -> burstfuse::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mcmaster_proxy");
    let ds = load_dataset(&dir, Some(128))?;
    let cfg = BenchConfig::default();
    let ns = [1, 2, 4, 8, 12, 15];
    let report = run_frames_sweep(&ds, &ns, SweepAlignment::Oracle, &cfg)?;
    println!("{:>3} {:>12} {:>12}", "n", "vs 15-frame", "vs truth");
    for n in ns {
        let (r, _) = report
            .mean(&frames_config_id(n, "ref"))
            .expect("row present");
        let (t, _) = report
            .mean(&frames_config_id(n, "truth"))
            .expect("row present");
        println!("{n:3} {r:10.2} dB {t:9.2} dB");
    }
    Ok(())
}
