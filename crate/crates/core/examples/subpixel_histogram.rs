//! Fractional offsets: a lattice-stepping linear motion only ever visits a
//! few fractions, while random hand-shake offsets cover them uniformly.

use burstfuse::align::{chi_square_uniformity, subpixel_offset_histogram, AlignmentField};
use burstfuse::synth::{continuous_oracle_fields, generate_burst_offsets, linear_motion_offsets};

fn fields_for(offsets: &burstfuse::synth::OffsetList) -> Vec<AlignmentField> {
    // one tile per frame so every frame counts once
    continuous_oracle_fields(offsets, 16, 16, 16)
}

fn main() {
    let lattice = linear_motion_offsets(32, [0.5, 0.25]);
    let hist = subpixel_offset_histogram(&fields_for(&lattice), 4);
    println!("linear motion (0.5, 0.25) px/frame, 4x4 bins:");
    for by in 0..4 {
        let row: Vec<String> = (0..4)
            .map(|bx| format!("{:.3}", hist.freq_at(bx, by)))
            .collect();
        println!("  {}", row.join(" "));
    }

    let drift = linear_motion_offsets(15, [0.37, 0.23]);
    let hist = subpixel_offset_histogram(&fields_for(&drift), 10);
    println!(
        "linear motion (0.37, 0.23) px/frame: {} of 10 x bins, {} of 10 y bins occupied",
        hist.occupied_bins(0),
        hist.occupied_bins(1)
    );

    let random = generate_burst_offsets(1000, 2.0, 9);
    let hist = subpixel_offset_histogram(&fields_for(&random), 10);
    for axis in 0..2 {
        let (stat, p) = chi_square_uniformity(&hist.marginal(axis));
        println!("random offsets, axis {axis}: chi-square {stat:.2}, p = {p:.3}");
    }
}
