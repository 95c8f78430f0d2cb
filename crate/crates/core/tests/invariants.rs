//! Property tests of the merge invariants.

use burstfuse::align::AlignmentField;
use burstfuse::image::{Plane, RgbImage};
use burstfuse::kernel::{
    eigen2x2, kernel_covariance, kernel_shape_params, sample_weight, structure_tensor_field,
    KernelField, Sym2,
};
use burstfuse::merge::{merge_burst, merge_burst_with_alignment, AlignmentMode, MergeConfig};
use burstfuse::noise::{tuning_for_snr, NoiseParams};
use burstfuse::raw::{mosaic_rggb, BayerFrame, Burst, LumaImage};
use burstfuse::robust::{robustness_map, shrink_distance};
use burstfuse::synth::{generate_burst_offsets, oracle_fields, synthesize_burst, BlobScene};
use proptest::prelude::*;

fn cfg_fast() -> MergeConfig {
    MergeConfig {
        noise_table_samples: 4_000,
        ..MergeConfig::default()
    }
}

fn blob_burst(side: usize, frames: usize, seed: u64) -> Burst {
    let truth = BlobScene::new(side, side, side * side / 200, seed).render(side, side);
    synthesize_burst(&truth, &generate_burst_offsets(frames, 2.0, seed)).unwrap()
}

fn bits(img: &RgbImage) -> Vec<u32> {
    img.channels()
        .iter()
        .flat_map(|p| p.data().iter().map(|v| v.to_bits()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constant_burst_is_reproduced_exactly(level in 0.0f32..=1.0, frames in 1usize..5, zoom in prop_oneof![Just(1.0), Just(1.5), Just(2.0)]) {
        let frame = BayerFrame::from_plane(Plane::filled(48, 48, level)).unwrap();
        let burst = Burst::new(vec![frame; frames], 0, NoiseParams::new(0.0, 0.0).unwrap()).unwrap();
        let cfg = MergeConfig { zoom, ..cfg_fast() };
        let out = merge_burst(&burst, &cfg).unwrap();
        for c in out.image.channels() {
            prop_assert!(c.data().iter().all(|&v| v == level), "level {level} not conserved");
        }
    }

    #[test]
    fn output_within_per_channel_input_range(seed in 0u64..1000, frames in 2usize..6) {
        let burst = blob_burst(48, frames, seed);
        let out = merge_burst(&burst, &cfg_fast()).unwrap();
        for c in 0..3 {
            let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
            for f in burst.frames() {
                for y in 0..f.height() {
                    for x in 0..f.width() {
                        if f.channel_at(x, y) == c {
                            let v = f.data().get(x, y);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                }
            }
            for &v in out.image.channel(c).data() {
                prop_assert!(v >= lo - 1e-6 && v <= hi + 1e-6, "channel {c}: {v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn base_frame_has_full_confidence(seed in 0u64..1000, base in 0usize..3) {
        let b = blob_burst(48, 3, seed);
        let burst = Burst::new(b.frames().to_vec(), base, b.noise()).unwrap();
        let out = merge_burst(&burst, &cfg_fast()).unwrap();
        prop_assert_eq!(out.diagnostics.frames[base].mean_mask, 1.0);
    }

    #[test]
    fn refined_mask_is_bounded_and_below_raw(
        vals in proptest::collection::vec((0.0f32..0.1, 0.0f32..0.3, prop_oneof![Just(2.0f32), Just(12.0f32)]), 64)
    ) {
        let sigma = Plane::from_fn(8, 8, |x, y| vals[y * 8 + x].0);
        let d = Plane::from_fn(8, 8, |x, y| vals[y * 8 + x].1);
        let s = Plane::from_fn(8, 8, |x, y| vals[y * 8 + x].2);
        let (raw, refined) = robustness_map(&sigma, &d, &s, &tuning_for_snr(30.0), 1);
        for (r, h) in raw.data().iter().zip(refined.values.data()) {
            prop_assert!((0.0..=1.0).contains(h));
            prop_assert!(h <= r);
        }
    }

    #[test]
    fn kernel_covariance_is_spd(vals in proptest::collection::vec(0.0f32..1.0, 24 * 24), snr in 1.0f64..60.0) {
        let luma = LumaImage(Plane::from_vec(24, 24, vals).unwrap());
        let tune = tuning_for_snr(snr);
        let field = KernelField::from_luma(&luma, &tune);
        for y in 0..24 {
            for x in 0..24 {
                prop_assert!(field.omega_at_pixel(x, y).is_positive_definite());
            }
        }
        let tensors = structure_tensor_field(&luma);
        let t = tensors.get(5, 7);
        let eig = eigen2x2(&t);
        let shape = kernel_shape_params(eig.lambda1, eig.lambda2, &tune);
        prop_assert!(kernel_covariance(&eig, &shape).is_positive_definite());
    }

    #[test]
    fn sample_weight_peaks_at_zero_and_decays(a in 0.05f64..4.0, c in 0.05f64..4.0, b in -0.9f64..0.9, dx in -3.0f64..3.0, dy in -3.0f64..3.0, t in 1.0f64..3.0) {
        let omega = Sym2::new(a, b * (a * c).sqrt(), c);
        let inv = omega.inverse().unwrap();
        prop_assert_eq!(sample_weight(0.0, 0.0, &inv), 1.0);
        let w1 = sample_weight(dx, dy, &inv);
        let w2 = sample_weight(t * dx, t * dy, &inv);
        prop_assert!(w1 > 0.0 && w1 <= 1.0);
        prop_assert!(w2 <= w1);
    }

    #[test]
    fn wiener_shrinkage_limits(d_ms in 0.0f64..10.0) {
        prop_assert!((shrink_distance(d_ms, 0.0) - d_ms).abs() <= 1e-12 * d_ms.max(1.0));
        prop_assert!((shrink_distance(d_ms, d_ms) - d_ms / 2.0).abs() <= 1e-12 * d_ms.max(1.0));
        prop_assert!(shrink_distance(d_ms, 1e-3) <= d_ms * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn frame_order_does_not_change_auto_merge(seed in 0u64..1000, rot in 1usize..4) {
        let burst = blob_burst(64, 5, seed);
        let mut order: Vec<usize> = (1..5).collect();
        order.rotate_left(rot);
        order.insert(2, 0);
        let permuted = burst.permuted(&order).unwrap();
        let a = merge_burst(&burst, &cfg_fast()).unwrap().image;
        let b = merge_burst(&permuted, &cfg_fast()).unwrap().image;
        prop_assert!(bits(&a) == bits(&b));
    }

    #[test]
    fn frame_order_does_not_change_oracle_merge(seed in 0u64..1000, zoom in prop_oneof![Just(1.0), Just(2.0)]) {
        let truth = BlobScene::new(64, 64, 20, seed).render(64, 64);
        let offsets = generate_burst_offsets(4, 2.0, seed);
        let burst = synthesize_burst(&truth, &offsets).unwrap();
        let fields = oracle_fields(&offsets, 64, 64, 16);
        let cfg = MergeConfig { zoom, alignment: AlignmentMode::Oracle, ..cfg_fast() };
        let order = [3usize, 0, 2, 1];
        let permuted = burst.permuted(&order).unwrap();
        let pf: Vec<AlignmentField> = order.iter().enumerate().map(|(k, &i)| fields[i].clone().with_frame_index(k)).collect();
        let a = merge_burst_with_alignment(&burst, &cfg, Some(&fields)).unwrap().image;
        let b = merge_burst_with_alignment(&permuted, &cfg, Some(&pf)).unwrap().image;
        prop_assert!(bits(&a) == bits(&b));
    }

    #[test]
    fn reruns_are_bit_identical(seed in 0u64..1000) {
        let burst = blob_burst(64, 4, seed);
        let a = merge_burst(&burst, &cfg_fast()).unwrap().image;
        let b = merge_burst(&burst, &cfg_fast()).unwrap().image;
        prop_assert!(bits(&a) == bits(&b));
    }
}

#[test]
fn single_frame_of_mosaic_matches_its_own_samples() {
    let truth = BlobScene::new(32, 32, 10, 9).render(32, 32);
    let frame = BayerFrame::from_plane(mosaic_rggb(&truth)).unwrap();
    let burst = Burst::new(vec![frame.clone()], 0, NoiseParams::new(0.0, 0.0).unwrap()).unwrap();
    let out = merge_burst(&burst, &cfg_fast()).unwrap().image;
    for y in 0..32 {
        for x in 0..32 {
            let c = frame.channel_at(x, y);
            if c != 1 {
                assert_eq!(out.channel(c).get(x, y), frame.data().get(x, y));
            }
        }
    }
}
