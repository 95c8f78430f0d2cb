//! Per-frame merge confidence.
//!
//! Local colour statistics of the aligned frame are compared with the base
//! frame on the half-resolution guide image. Differences that noise alone
//! explains keep full confidence; larger ones reduce it. A motion prior
//! picks the strength, a 5x5 minimum filter spreads rejections, and a
//! high-frequency check drops aliased regions inside moving tiles.

use rayon::prelude::*;

use crate::align::AlignmentField;
use crate::image::Plane;
use crate::noise::{NoiseTables, TuningParams};
use crate::raw::{GuideImage, LumaImage};

/// Default variance-loss ratio below which a region counts as aliased.
pub const DEFAULT_LOSS_THRESHOLD: f64 = 0.5;

/// Per half-resolution pixel statistics of one aligned frame.
#[derive(Clone, Debug)]
pub struct LocalStats {
    /// 3x3 per-channel means of the base guide.
    pub base_mean: [Plane; 3],
    /// 3x3 per-channel means of the aligned frame guide.
    pub frame_mean: [Plane; 3],
    /// Max over channels of the aligned frame's 3x3 sample std.
    pub sigma_ms: Plane,
    /// Max over channels of `|frame_mean - base_mean|`.
    pub d_ms: Plane,
}

impl LocalStats {
    /// Luma of the base local mean, used as the noise-table coordinate.
    pub fn brightness(&self) -> Plane {
        let (w, h) = self.sigma_ms.dims();
        Plane::from_fn(w, h, |x, y| {
            (self
                .base_mean
                .iter()
                .map(|p| p.get(x, y) as f64)
                .sum::<f64>()
                / 3.0) as f32
        })
    }
}

/// Half-resolution displacement of the tile covering half-res pixel `(x, y)`.
#[inline]
fn half_res_vector(field: &AlignmentField, x: usize, y: usize) -> [f64; 2] {
    let v = field.vector_at((2 * x) as f64 + 0.5, (2 * y) as f64 + 0.5);
    [v[0] * 0.5, v[1] * 0.5]
}

fn mean_std_3x3(sample: impl Fn(isize, isize) -> f64) -> (f64, f64) {
    let mut vals = [0.0f64; 9];
    let mut k = 0;
    for j in -1..=1 {
        for i in -1..=1 {
            vals[k] = sample(i, j);
            k += 1;
        }
    }
    let mean = vals.iter().sum::<f64>() / 9.0;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
    (mean, var.sqrt())
}

pub fn local_statistics(
    guide_base: &GuideImage,
    guide_frame: &GuideImage,
    field: &AlignmentField,
) -> LocalStats {
    let (w, h) = guide_base.dims();
    let rows: Vec<Vec<[f32; 8]>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let u = half_res_vector(field, x, y);
                    let mut out = [0.0f32; 8];
                    let (mut sigma, mut d) = (0.0f64, 0.0f64);
                    for c in 0..3 {
                        let (pb, pf) = (guide_base.channel(c), guide_frame.channel(c));
                        let (mb, _) = mean_std_3x3(|i, j| {
                            pb.get_clamped(x as isize + i, y as isize + j) as f64
                        });
                        let (mf, sf) = mean_std_3x3(|i, j| {
                            pf.sample_bilinear(
                                x as f64 + i as f64 + u[0],
                                y as f64 + j as f64 + u[1],
                            )
                        });
                        out[c] = mb as f32;
                        out[3 + c] = mf as f32;
                        sigma = sigma.max(sf);
                        d = d.max((mf - mb).abs());
                    }
                    out[6] = sigma as f32;
                    out[7] = d as f32;
                    out
                })
                .collect()
        })
        .collect();
    let plane = |k: usize| Plane::from_fn(w, h, |x, y| rows[y][x][k]);
    LocalStats {
        base_mean: [plane(0), plane(1), plane(2)],
        frame_mean: [plane(3), plane(4), plane(5)],
        sigma_ms: plane(6),
        d_ms: plane(7),
    }
}

/// Wiener-shrunk distance: `d_ms^3 / (d_ms^2 + d_md^2)`.
#[inline]
pub fn shrink_distance(d_ms: f64, d_md: f64) -> f64 {
    let denom = d_ms * d_ms + d_md * d_md;
    if denom <= 0.0 {
        0.0
    } else {
        d_ms * d_ms * d_ms / denom
    }
}

/// Noise-corrected `(sigma, d)` fields.
pub fn noise_corrected_stats(stats: &LocalStats, tables: &NoiseTables) -> (Plane, Plane) {
    let brightness = stats.brightness();
    let (w, h) = stats.sigma_ms.dims();
    let mut sigma = Plane::new(w, h);
    let mut d = Plane::new(w, h);
    for i in 0..w * h {
        let (s_md, d_md) = tables.lookup(brightness.data()[i] as f64);
        sigma.data_mut()[i] = (stats.sigma_ms.data()[i] as f64).max(s_md) as f32;
        d.data_mut()[i] = shrink_distance(stats.d_ms.data()[i] as f64, d_md) as f32;
    }
    (sigma, d)
}

/// Motion-prior strength per tile (row-major over the field's grid): `s1`
/// where the 3x3 tile neighbourhood's motion extent exceeds `m_th`, else
/// `s2`.
pub fn motion_prior_scale(field: &AlignmentField, tune: &TuningParams) -> Vec<f64> {
    let (gw, gh) = field.grid_dims();
    (0..gw * gh)
        .map(|i| {
            if field.motion_extent(i % gw, i / gw) > tune.m_th {
                tune.s1
            } else {
                tune.s2
            }
        })
        .collect()
}

/// Expands per-tile strengths to a half-resolution plane.
pub fn scale_plane(field: &AlignmentField, s_tiles: &[f64], width: usize, height: usize) -> Plane {
    let (gw, _) = field.grid_dims();
    Plane::from_fn(width, height, |x, y| {
        let (tx, ty) = field.tile_of((2 * x) as f64 + 0.5, (2 * y) as f64 + 0.5);
        s_tiles[ty * gw + tx] as f32
    })
}

/// Confidence before refinement: `clamp(s exp(-d^2/sigma^2) - t, 0, 1)`,
/// with the `sigma = 0` limits resolved explicitly.
#[inline]
pub fn robustness_value(sigma: f64, d: f64, s: f64, t: f64) -> f64 {
    let e = if sigma > 0.0 {
        (-(d * d) / (sigma * sigma)).exp()
    } else if d > 0.0 {
        0.0
    } else {
        1.0
    };
    (s * e - t).clamp(0.0, 1.0)
}

/// Per-pixel merge confidence of one frame on the half-resolution grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessMask {
    pub values: Plane,
    pub frame_index: usize,
}

impl RobustnessMask {
    /// Full confidence (the base frame).
    pub fn ones(width: usize, height: usize, frame_index: usize) -> Self {
        Self {
            values: Plane::filled(width, height, 1.0),
            frame_index,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn mean(&self) -> f64 {
        self.values.mean()
    }

    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        self.values.get_clamped(x, y)
    }
}

/// Minimum over the `(2r+1)x(2r+1)` neighbourhood, clamped borders.
pub fn min_filter(p: &Plane, radius: usize) -> Plane {
    let r = radius as isize;
    let (w, h) = p.dims();
    let horiz = Plane::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|i| p.get_clamped(x as isize + i, y as isize))
            .fold(f32::INFINITY, f32::min)
    });
    Plane::from_fn(w, h, |x, y| {
        (-r..=r)
            .map(|j| horiz.get_clamped(x as isize, y as isize + j))
            .fold(f32::INFINITY, f32::min)
    })
}

/// Returns `(R, R_hat)`: the raw confidence and its 5x5 minimum.
pub fn robustness_map(
    sigma: &Plane,
    d: &Plane,
    s: &Plane,
    tune: &TuningParams,
    frame_index: usize,
) -> (Plane, RobustnessMask) {
    let (w, h) = sigma.dims();
    let mut r = Plane::new(w, h);
    for i in 0..w * h {
        r.data_mut()[i] = robustness_value(
            sigma.data()[i] as f64,
            d.data()[i] as f64,
            s.data()[i] as f64,
            tune.t,
        ) as f32;
    }
    let refined = min_filter(&r, 2);
    (
        r,
        RobustnessMask {
            values: refined,
            frame_index,
        },
    )
}

/// 3x3 sample variance (Bessel) at every pixel.
fn local_variance(p: &Plane) -> Plane {
    let (w, h) = p.dims();
    Plane::from_fn(w, h, |x, y| {
        let (_, s) = mean_std_3x3(|i, j| p.get_clamped(x as isize + i, y as isize + j) as f64);
        (s * s) as f32
    })
}

/// Ratio of local variance after a 3x3 box low-pass to the variance before;
/// 1 where the region is flat.
pub fn variance_loss_ratio(luma: &LumaImage) -> Plane {
    let before = local_variance(luma.plane());
    let after = local_variance(&luma.plane().box_filter(1));
    let (w, h) = before.dims();
    Plane::from_fn(w, h, |x, y| {
        let b = before.get(x, y) as f64;
        if b < 1e-12 {
            1.0
        } else {
            (after.get(x, y) as f64 / b) as f32
        }
    })
}

/// Zeroes the mask where the aligned frame content is dominated by
/// frequencies a 3x3 low-pass removes and the local motion extent exceeds
/// `m_th`.
pub fn hf_variance_reject(
    luma_frame: &LumaImage,
    field: &AlignmentField,
    mask: &RobustnessMask,
    tune: &TuningParams,
    loss_threshold: f64,
) -> RobustnessMask {
    let (w, h) = mask.dims();
    let (gw, gh) = field.grid_dims();
    let moving: Vec<bool> = (0..gw * gh)
        .map(|i| field.motion_extent(i % gw, i / gw) > tune.m_th)
        .collect();
    let mut out = mask.clone();
    if !moving.iter().any(|&m| m) {
        return out;
    }
    let ratio = variance_loss_ratio(luma_frame);
    for y in 0..h {
        for x in 0..w {
            let (tx, ty) = field.tile_of((2 * x) as f64 + 0.5, (2 * y) as f64 + 0.5);
            if !moving[ty * gw + tx] {
                continue;
            }
            let u = half_res_vector(field, x, y);
            let qx = (x as f64 + u[0]).round() as isize;
            let qy = (y as f64 + u[1]).round() as isize;
            if (ratio.get_clamped(qx, qy) as f64) < loss_threshold {
                out.values.set(x, y, 0.0);
            }
        }
    }
    out
}

/// Settings for [`compute_robustness`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustnessConfig {
    pub loss_threshold: f64,
    pub hf_reject: bool,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            loss_threshold: DEFAULT_LOSS_THRESHOLD,
            hf_reject: true,
        }
    }
}

/// Full robustness pipeline for one non-base frame.
pub fn compute_robustness(
    guide_base: &GuideImage,
    guide_frame: &GuideImage,
    luma_frame: &LumaImage,
    field: &AlignmentField,
    tables: &NoiseTables,
    tune: &TuningParams,
    cfg: &RobustnessConfig,
) -> RobustnessMask {
    let stats = local_statistics(guide_base, guide_frame, field);
    let (sigma, d) = noise_corrected_stats(&stats, tables);
    let (w, h) = sigma.dims();
    let s = scale_plane(field, &motion_prior_scale(field, tune), w, h);
    let (_, mask) = robustness_map(&sigma, &d, &s, tune, field.frame_index());
    if cfg.hf_reject {
        hf_variance_reject(luma_frame, field, &mask, tune, cfg.loss_threshold)
    } else {
        mask
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::tuning_for_snr;
    use approx::assert_abs_diff_eq;

    fn guide(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> GuideImage {
        let p = Plane::from_fn(w, h, f);
        GuideImage {
            r: p.clone(),
            g: p.clone(),
            b: p,
        }
    }

    #[test]
    fn statistics_examples() {
        let field = AlignmentField::zeros(16, 16, 16, 1);
        let tex = guide(8, 8, |x, y| ((x * 3 + y * 5) % 7) as f32 / 7.0);
        let s = local_statistics(&tex, &tex, &field);
        assert!(s.d_ms.data().iter().all(|&v| v == 0.0));

        let c5 = guide(8, 8, |_, _| 0.5);
        let c6 = guide(8, 8, |_, _| 0.6);
        let s = local_statistics(&c5, &c6, &field);
        assert!(s.sigma_ms.data().iter().all(|&v| v == 0.0));
        assert!(s.d_ms.data().iter().all(|&v| (v - 0.1).abs() < 1e-6));
    }

    #[test]
    fn shrinkage_limits() {
        assert_eq!(shrink_distance(0.3, 0.0), 0.3);
        assert_abs_diff_eq!(shrink_distance(0.3, 0.3), 0.15, epsilon = 1e-12);
        assert_eq!(shrink_distance(0.0, 0.0), 0.0);
    }

    #[test]
    fn sigma_is_max_of_measured_and_expected() {
        let field = AlignmentField::zeros(8, 8, 16, 1);
        let c = guide(4, 4, |_, _| 0.5);
        let mut stats = local_statistics(&c, &c, &field);
        stats.sigma_ms = Plane::filled(4, 4, 0.01);
        let tables =
            NoiseTables::from_columns(vec![0.0, 1.0], vec![0.02, 0.02], vec![0.0, 0.0]).unwrap();
        let (sigma, _) = noise_corrected_stats(&stats, &tables);
        assert!(sigma.data().iter().all(|&v| (v - 0.02).abs() < 1e-7));
    }

    #[test]
    fn motion_prior_examples() {
        let tune = tuning_for_snr(30.0);
        let mut f = AlignmentField::zeros(48, 48, 16, 1);
        assert!(motion_prior_scale(&f, &tune).iter().all(|&s| s == 2.0));
        f.set(0, 0, [3.0, 4.0]);
        assert_eq!(motion_prior_scale(&f, &tune)[4], 12.0);
        let mut g = AlignmentField::zeros(48, 48, 16, 1);
        g.set(0, 0, [0.8, 0.0]);
        assert_eq!(motion_prior_scale(&g, &tune)[4], 2.0);
    }

    #[test]
    fn robustness_examples() {
        let tune = tuning_for_snr(30.0);
        let zero = Plane::filled(8, 8, 0.0);
        let sig = Plane::filled(8, 8, 0.05);
        let s2 = Plane::filled(8, 8, 2.0);
        let (_, m) = robustness_map(&sig, &zero, &s2, &tune, 1);
        assert!(m.values.data().iter().all(|&v| v == 1.0));
        let (_, m) = robustness_map(&sig, &Plane::filled(8, 8, 1.0), &s2, &tune, 1);
        assert!(m.values.data().iter().all(|&v| v == 0.0));
        let (r, _) = robustness_map(&sig, &sig, &s2, &tune, 1);
        assert_abs_diff_eq!(
            r.get(3, 3) as f64,
            2.0 * (-1.0f64).exp() - 0.12,
            epsilon = 1e-6
        );
        assert_eq!(robustness_value(0.0, 0.0, 2.0, 0.12), 1.0);
        assert_eq!(robustness_value(0.0, 0.1, 2.0, 0.12), 0.0);
    }

    #[test]
    fn min_filter_spreads_rejection() {
        let tune = tuning_for_snr(30.0);
        let sig = Plane::filled(9, 9, 0.05);
        let mut d = Plane::filled(9, 9, 0.0);
        d.set(4, 4, 1.0);
        let (r, m) = robustness_map(&sig, &d, &Plane::filled(9, 9, 2.0), &tune, 1);
        assert_eq!(r.get(2, 2), 1.0);
        assert_eq!(m.values.get(2, 2), 0.0);
        assert_eq!(m.values.get(1, 1), 1.0);
    }

    #[test]
    fn variance_loss_examples() {
        let smooth = LumaImage(Plane::from_fn(16, 16, |x, y| (x + y) as f32 * 0.01));
        let r = variance_loss_ratio(&smooth);
        assert!(r.get(8, 8) > 0.5);
        let checker = LumaImage(Plane::from_fn(16, 16, |x, y| ((x + y) % 2) as f32));
        let r = variance_loss_ratio(&checker);
        assert!(r.get(8, 8) < 0.05);

        let tune = tuning_for_snr(30.0);
        let mask = RobustnessMask::ones(16, 16, 1);
        let still = AlignmentField::uniform(32, 32, 16, 1, [2.0, 0.0]);
        assert_eq!(
            hf_variance_reject(&checker, &still, &mask, &tune, 0.5),
            mask
        );
        let mut moving = still.clone();
        moving.set(0, 0, [-2.0, 1.0]);
        let out = hf_variance_reject(&checker, &moving, &mask, &tune, 0.5);
        assert_eq!(out.values.get(8, 8), 0.0);
        // smooth content survives away from the clamped image corners
        let kept = hf_variance_reject(&smooth, &moving, &mask, &tune, 0.5);
        for y in 1..13 {
            for x in 1..13 {
                assert_eq!(kept.values.get(x, y), 1.0);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mask_bounded_and_below_raw(vals in proptest::collection::vec((0.0f32..0.2, 0.0f32..0.3, prop_oneof![Just(2.0f32), Just(12.0f32)]), 36)) {
                let tune = tuning_for_snr(30.0);
                let sigma = Plane::from_vec(6, 6, vals.iter().map(|v| v.0).collect()).unwrap();
                let d = Plane::from_vec(6, 6, vals.iter().map(|v| v.1).collect()).unwrap();
                let s = Plane::from_vec(6, 6, vals.iter().map(|v| v.2).collect()).unwrap();
                let (r, m) = robustness_map(&sigma, &d, &s, &tune, 1);
                for (a, b) in r.data().iter().zip(m.values.data()) {
                    prop_assert!((0.0..=1.0).contains(b));
                    prop_assert!(b <= a);
                }
            }

            #[test]
            fn larger_distance_never_raises_mask(vals in proptest::collection::vec((0.001f32..0.2, 0.0f32..0.3), 36), k in 0usize..36, bump in 0.0f32..0.5) {
                let tune = tuning_for_snr(30.0);
                let sigma = Plane::from_vec(6, 6, vals.iter().map(|v| v.0).collect()).unwrap();
                let d = Plane::from_vec(6, 6, vals.iter().map(|v| v.1).collect()).unwrap();
                let mut d2 = d.clone();
                d2.data_mut()[k] += bump;
                let s = Plane::filled(6, 6, 2.0);
                let (_, a) = robustness_map(&sigma, &d, &s, &tune, 1);
                let (_, b) = robustness_map(&sigma, &d2, &s, &tune, 1);
                for (x, y) in a.values.data().iter().zip(b.values.data()) {
                    prop_assert!(y <= x);
                }
            }

            #[test]
            fn identical_frames_zero_noise_full_confidence(seed in 0u64..1000) {
                let tune = tuning_for_snr(30.0);
                let g = guide(10, 10, |x, y| (((x as u64 * 31 + y as u64 * 17 + seed) % 101) as f32) / 101.0);
                let luma = LumaImage(g.r.clone());
                let field = AlignmentField::zeros(20, 20, 16, 1);
                let m = compute_robustness(&g, &g, &luma, &field, &NoiseTables::zeros(16), &tune, &RobustnessConfig::default());
                prop_assert!(m.values.data().iter().all(|&v| v == 1.0));
            }
        }
    }
}
