//! Kernel-regression merge.
//!
//! Every frame is visited once, in burst order. For each output pixel the
//! nine raw samples nearest to its aligned position are splatted into the
//! per-channel accumulator with anisotropic Gaussian weights scaled by the
//! frame's robustness. Normalizing the sums yields RGB directly, with no
//! demosaicing step.

use std::path::PathBuf;

use rayon::prelude::*;

use crate::align::{align_frame, AlignConfig, AlignInputs, AlignmentField};
use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};
use crate::kernel::{sample_weight, KernelField};
use crate::noise::{
    calibrated_tables, estimate_snr, tuning_for_snr, TuningOverrides, TuningParams,
    DEFAULT_TABLE_BINS, DEFAULT_TABLE_SAMPLES, DEFAULT_TABLE_SEED,
};
use crate::raw::{
    bilinear_demosaic_baseline, build_guide_image, decimate_luma, BayerFrame, Burst,
    DEFAULT_FRAME_CAP,
};
use crate::robust::{compute_robustness, RobustnessConfig, RobustnessMask};

/// Fixed-point scale of accumulated sums. Integer sums are associative, so
/// the merged result does not depend on the order frames arrive in.
const FIXED_SCALE: f64 = (1u64 << 50) as f64;
/// Weight sums below this fall back to the bilinear demosaic of the base.
pub const MIN_WEIGHT: f64 = 1e-8;
pub const MIN_ZOOM: f64 = 1.0;
pub const MAX_ZOOM: f64 = 3.0;

/// Per-output-pixel, per-channel weighted sums.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    width: usize,
    height: usize,
    zoom: f64,
    /// `[num_r, num_g, num_b, den_r, den_g, den_b]` per pixel, fixed point.
    sums: Vec<[i64; 6]>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, zoom: f64) -> Self {
        Self {
            width,
            height,
            zoom,
            sums: vec![[0; 6]; width * height],
        }
    }

    /// Accumulator for a `w`x`h` Bayer frame at zoom `z`; the output grid is
    /// `floor(z w) x floor(z h)` rounded down to even.
    pub fn for_frame(w: usize, h: usize, zoom: f64) -> Self {
        let (ow, oh) = output_dims(w, h, zoom);
        Self::new(ow, oh, zoom)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn zoom(&self) -> f64 {
        self.zoom
    }

    /// `(num, den)` of one channel at one pixel.
    pub fn sums_at(&self, x: usize, y: usize, c: usize) -> (f64, f64) {
        let s = &self.sums[y * self.width + x];
        (s[c] as f64 / FIXED_SCALE, s[3 + c] as f64 / FIXED_SCALE)
    }

    pub fn is_empty(&self) -> bool {
        self.sums.iter().all(|s| s.iter().all(|&v| v == 0))
    }

    /// Heap bytes held by the sums.
    pub fn heap_bytes(&self) -> usize {
        self.sums.capacity() * std::mem::size_of::<[i64; 6]>()
    }
}

pub fn output_dims(w: usize, h: usize, zoom: f64) -> (usize, usize) {
    let ow = ((w as f64 * zoom).floor() as usize) & !1;
    let oh = ((h as f64 * zoom).floor() as usize) & !1;
    (ow.max(2), oh.max(2))
}

/// How alignment vectors are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignmentMode {
    /// Pyramid block matching plus Lucas-Kanade.
    Auto,
    /// Ground-truth fields supplied by the caller (synthetic bursts).
    Oracle,
    /// Fields read from CSV files.
    Csv,
}

impl AlignmentMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "oracle" => Ok(Self::Oracle),
            "csv" => Ok(Self::Csv),
            other => Err(Error::InvalidArgument(format!(
                "unknown alignment mode `{other}` (expected auto, oracle or csv)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::Oracle => "oracle",
            Self::Csv => "csv",
        }
    }
}

/// Output stage applied after normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FinishConfig {
    /// Unsharp-mask Gaussian sigma in output pixels; 0 disables.
    pub unsharp_sigma: f64,
    pub unsharp_amount: f64,
    /// Gamma 1/2.2 followed by a smoothstep S-curve.
    pub tone_curve: bool,
}

impl Default for FinishConfig {
    fn default() -> Self {
        Self {
            unsharp_sigma: 3.0,
            unsharp_amount: 1.0,
            tone_curve: true,
        }
    }
}

/// Merge settings.
#[derive(Clone, Debug)]
pub struct MergeConfig {
    pub zoom: f64,
    pub frame_cap: usize,
    pub alignment: AlignmentMode,
    /// Replacements for fields of the SNR-derived tuning.
    pub tuning: TuningOverrides,
    pub pyramid_levels: usize,
    pub search_radius: i32,
    pub lk_iterations: usize,
    /// Disabling makes every frame merge with full confidence.
    pub robustness: bool,
    pub robust: RobustnessConfig,
    pub noise_table_bins: usize,
    pub noise_table_samples: usize,
    pub noise_table_seed: u64,
    pub noise_cache_dir: Option<PathBuf>,
    pub finish: Option<FinishConfig>,
    pub debug_robustness: Option<PathBuf>,
    pub debug_kernels: Option<PathBuf>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        let a = AlignConfig::default();
        Self {
            zoom: 1.0,
            frame_cap: DEFAULT_FRAME_CAP,
            alignment: AlignmentMode::Auto,
            tuning: TuningOverrides::default(),
            pyramid_levels: a.pyramid_levels,
            search_radius: a.search_radius,
            lk_iterations: a.lk_iterations,
            robustness: true,
            robust: RobustnessConfig::default(),
            noise_table_bins: DEFAULT_TABLE_BINS,
            noise_table_samples: DEFAULT_TABLE_SAMPLES,
            noise_table_seed: DEFAULT_TABLE_SEED,
            noise_cache_dir: None,
            finish: None,
            debug_robustness: None,
            debug_kernels: None,
            threads: None,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_ZOOM..=MAX_ZOOM).contains(&self.zoom) {
            return Err(Error::Config(format!(
                "zoom {} outside the supported range [{MIN_ZOOM}, {MAX_ZOOM}]",
                self.zoom
            )));
        }
        if self.frame_cap == 0 {
            return Err(Error::Config("frame cap must be at least 1".into()));
        }
        if let Some(t) = self.tuning.tile_size {
            if t < 4 || t % 4 != 0 {
                return Err(Error::Config(format!(
                    "tile size {t} must be a positive multiple of 4"
                )));
            }
        }
        let o = &self.tuning;
        for (name, v) in [
            ("k_detail", o.k_detail),
            ("k_denoise", o.k_denoise),
            ("d_tr", o.d_tr),
            ("k_stretch", o.k_stretch),
            ("k_shrink", o.k_shrink),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn align_config(&self, tile_size: usize) -> AlignConfig {
        AlignConfig {
            tile_size,
            pyramid_levels: self.pyramid_levels,
            search_radius: self.search_radius,
            lk_iterations: self.lk_iterations,
        }
    }
}

/// Splats one frame into the accumulator.
///
/// Output pixel `(ox, oy)` sits at base-frame position
/// `x = (ox + 0.5) / z - 0.5`. Its tile vector `v` maps it to `q = x + v` in
/// the frame; the 3x3 samples around `round(q)` contribute with offset
/// `d = s - v - x` and the kernel covariance found at `q` in the frame's own
/// field. Confidence is read from the nearest base half-resolution pixel.
pub fn accumulate_frame(
    acc: &mut Accumulator,
    frame: &BayerFrame,
    field: &AlignmentField,
    kernels: &KernelField,
    mask: &RobustnessMask,
) {
    let (w, h) = frame.dims();
    let (ow, _) = acc.dims();
    let z = acc.zoom;
    let data = frame.data();
    let pattern = frame.pattern();
    acc.sums
        .par_chunks_mut(ow)
        .enumerate()
        .for_each(|(oy, row)| {
            let y = (oy as f64 + 0.5) / z - 0.5;
            for (ox, cell) in row.iter_mut().enumerate() {
                let x = (ox as f64 + 0.5) / z - 0.5;
                let hx = (x.round().clamp(0.0, (w - 1) as f64) as isize) / 2;
                let hy = (y.round().clamp(0.0, (h - 1) as f64) as isize) / 2;
                let r = mask.get_clamped(hx, hy) as f64;
                if r <= 0.0 {
                    continue;
                }
                let v = field.vector_at(x, y);
                let (qx, qy) = (x + v[0], y + v[1]);
                let (_, inv) = kernels.covariance_at((qx - 0.5) * 0.5, (qy - 0.5) * 0.5);
                let (cx, cy) = (qx.round() as i64, qy.round() as i64);
                for sy in cy - 1..=cy + 1 {
                    if sy < 0 || sy >= h as i64 {
                        continue;
                    }
                    for sx in cx - 1..=cx + 1 {
                        if sx < 0 || sx >= w as i64 {
                            continue;
                        }
                        let dx = sx as f64 - v[0] - x;
                        let dy = sy as f64 - v[1] - y;
                        let wr = sample_weight(dx, dy, &inv) * r;
                        let wq = (wr * FIXED_SCALE).round() as i64;
                        if wq == 0 {
                            continue;
                        }
                        let value = data.get(sx as usize, sy as usize) as f64;
                        let c = pattern.channel_at(sx as usize, sy as usize);
                        cell[c] += (value * wq as f64).round() as i64;
                        cell[3 + c] += wq;
                    }
                }
            }
        });
}

/// Normalizes the sums; channels with too little weight take the base
/// frame's bilinear demosaic (bilinearly resampled when zoomed).
pub fn finalize_merge(acc: &Accumulator, base: &BayerFrame) -> RgbImage {
    let (ow, oh) = acc.dims();
    let z = acc.zoom;
    let mut fallback: Option<RgbImage> = None;
    let min_den = (MIN_WEIGHT * FIXED_SCALE) as i64;
    if acc.sums.iter().any(|s| s[3..].iter().any(|&d| d < min_den)) {
        fallback = Some(bilinear_demosaic_baseline(base));
    }
    let mut planes = [Plane::new(ow, oh), Plane::new(ow, oh), Plane::new(ow, oh)];
    for oy in 0..oh {
        let y = (oy as f64 + 0.5) / z - 0.5;
        for ox in 0..ow {
            let x = (ox as f64 + 0.5) / z - 0.5;
            let s = &acc.sums[oy * ow + ox];
            for c in 0..3 {
                let v = if s[3 + c] < min_den {
                    fallback
                        .as_ref()
                        .expect("fallback built when needed")
                        .channel(c)
                        .sample_bilinear(x, y) as f32
                } else {
                    (s[c] as f64 / s[3 + c] as f64) as f32
                };
                planes[c].set(ox, oy, v);
            }
        }
    }
    let [r, g, b] = planes;
    RgbImage::from_planes(r, g, b).expect("equal dims")
}

/// Unsharp mask (when `sigma > 0`), then the optional tone curve, clamped.
pub fn finish_image(rgb: &RgbImage, cfg: &FinishConfig) -> RgbImage {
    let sharpened = if cfg.unsharp_sigma > 0.0 && cfg.unsharp_amount != 0.0 {
        rgb.map_channels(|p| {
            let blur = p.gaussian_blur(cfg.unsharp_sigma);
            let data = p
                .data()
                .iter()
                .zip(blur.data())
                .map(|(&v, &b)| v + cfg.unsharp_amount as f32 * (v - b))
                .collect();
            Plane::from_vec(p.width(), p.height(), data).expect("same dims")
        })
    } else {
        rgb.clone()
    };
    if cfg.tone_curve {
        sharpened.map_channels(|p| p.map(|v| tone_curve(v as f64) as f32))
    } else {
        sharpened.clamp01()
    }
}

/// Gamma 1/2.2 then smoothstep `3g^2 - 2g^3`, on values clamped to [0, 1].
pub fn tone_curve(v: f64) -> f64 {
    let g = v.clamp(0.0, 1.0).powf(1.0 / 2.2);
    (3.0 * g * g - 2.0 * g * g * g).clamp(0.0, 1.0)
}

/// Per-frame merge diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub mean_mask: f64,
    pub mean_abs_v: f64,
}

#[derive(Clone, Debug)]
pub struct MergeDiagnostics {
    pub snr: f64,
    pub tuning: TuningParams,
    pub frames: Vec<FrameDiagnostics>,
    /// Mean of the per-frame robustness masks (half resolution).
    pub mean_mask: Plane,
    /// Kernel anisotropy (A - 1) and denoise maps of the base frame.
    pub base_anisotropy: Plane,
    pub base_denoise: Plane,
}

impl MergeDiagnostics {
    /// Writes `frame,mean_mask,mean_abs_v` rows.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["frame", "mean_mask", "mean_abs_v"])
            .map_err(csv_err)?;
        for f in &self.frames {
            w.write_record([
                f.frame.to_string(),
                format!("{:.6}", f.mean_mask),
                format!("{:.6}", f.mean_abs_v),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct MergeOutput {
    pub image: RgbImage,
    pub diagnostics: MergeDiagnostics,
}

/// Merges a burst with automatic alignment.
pub fn merge_burst(burst: &Burst, cfg: &MergeConfig) -> Result<MergeOutput> {
    merge_burst_with_alignment(burst, cfg, None)
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool.
pub fn with_thread_count<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Merges a burst. `fields`, when given, supplies one alignment field per
/// frame (burst order) and overrides automatic registration; their tile
/// size is used as is.
pub fn merge_burst_with_alignment(
    burst: &Burst,
    cfg: &MergeConfig,
    fields: Option<&[AlignmentField]>,
) -> Result<MergeOutput> {
    cfg.validate()?;
    if burst.len() > cfg.frame_cap {
        return Err(Error::TooManyFrames {
            count: burst.len(),
            cap: cfg.frame_cap,
        });
    }
    if let Some(f) = fields {
        if f.len() != burst.len() {
            return Err(Error::InvalidArgument(format!(
                "{} alignment fields supplied for {} frames",
                f.len(),
                burst.len()
            )));
        }
    } else if cfg.alignment != AlignmentMode::Auto {
        return Err(Error::InvalidArgument(format!(
            "alignment mode `{}` needs precomputed fields",
            cfg.alignment.as_str()
        )));
    }
    let out = with_thread_count(cfg.threads, || merge_inner(burst, cfg, fields))??;
    if let Some(dir) = &cfg.debug_robustness {
        crate::io::write_heatmap_png(&out.diagnostics.mean_mask, &dir.join("robustness_mean.png"))?;
    }
    if let Some(dir) = &cfg.debug_kernels {
        crate::io::write_heatmap_png(
            &out.diagnostics.base_anisotropy,
            &dir.join("kernel_anisotropy.png"),
        )?;
        crate::io::write_heatmap_png(
            &out.diagnostics.base_denoise,
            &dir.join("kernel_denoise.png"),
        )?;
    }
    Ok(out)
}

fn merge_inner(
    burst: &Burst,
    cfg: &MergeConfig,
    fields: Option<&[AlignmentField]>,
) -> Result<MergeOutput> {
    let base = burst.base();
    let (w, h) = burst.dims();
    let noise = burst.noise();
    let snr = estimate_snr(base, noise);
    let tune = cfg.tuning.apply(tuning_for_snr(snr));
    let tables = calibrated_tables(
        noise,
        cfg.noise_table_bins,
        cfg.noise_table_samples,
        cfg.noise_table_seed,
        cfg.noise_cache_dir.as_deref(),
    );
    let align_cfg = cfg.align_config(tune.tile_size);
    let base_guide = build_guide_image(base);
    let base_inputs = if fields.is_none() {
        Some(AlignInputs::new(base, &align_cfg))
    } else {
        None
    };

    let mut acc = Accumulator::for_frame(w, h, cfg.zoom);
    let (hw, hh) = (w / 2, h / 2);
    let mut mask_sum = vec![0.0f64; hw * hh];
    let mut diags = Vec::with_capacity(burst.len());
    let mut base_maps = None;

    for (i, frame) in burst.frames().iter().enumerate() {
        let is_base = i == burst.base_index();
        let (field, luma) = match (fields, &base_inputs) {
            (Some(f), _) => (f[i].clone(), decimate_luma(frame)),
            (None, Some(bi)) => {
                if is_base {
                    (
                        AlignmentField::zeros(w, h, align_cfg.tile_size, i),
                        bi.luma.clone(),
                    )
                } else {
                    let inputs = AlignInputs::new(frame, &align_cfg);
                    let f = align_frame(bi, &inputs, &align_cfg, i);
                    (f, inputs.luma)
                }
            }
            (None, None) => unreachable!("auto mode builds base inputs"),
        };
        let kernels = KernelField::from_luma(&luma, &tune);
        let mask = if is_base || !cfg.robustness {
            RobustnessMask::ones(hw, hh, i)
        } else {
            let guide = build_guide_image(frame);
            compute_robustness(
                &base_guide,
                &guide,
                &luma,
                &field,
                &tables,
                &tune,
                &cfg.robust,
            )
        };
        if is_base {
            base_maps = Some((kernels.anisotropy_map(), kernels.denoise_map()));
        }
        accumulate_frame(&mut acc, frame, &field, &kernels, &mask);
        for (s, &m) in mask_sum.iter_mut().zip(mask.values.data()) {
            *s += m as f64;
        }
        diags.push(FrameDiagnostics {
            frame: i,
            mean_mask: mask.mean(),
            mean_abs_v: field.mean_magnitude(),
        });
        log::debug!("frame {i}: mean mask {:.4}", mask.mean());
    }

    let mut image = finalize_merge(&acc, base);
    if let Some(fin) = &cfg.finish {
        image = finish_image(&image, fin);
    }
    let n = burst.len() as f64;
    let mean_mask = Plane::from_vec(hw, hh, mask_sum.iter().map(|s| (s / n) as f32).collect())?;
    let (base_anisotropy, base_denoise) = base_maps.expect("base frame visited");
    Ok(MergeOutput {
        image,
        diagnostics: MergeDiagnostics {
            snr,
            tuning: tune,
            frames: diags,
            mean_mask,
            base_anisotropy,
            base_denoise,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Sym2;
    use crate::noise::NoiseParams;
    use crate::raw::mosaic_rggb;
    use approx::assert_abs_diff_eq;

    fn frame_from(img: &RgbImage) -> BayerFrame {
        BayerFrame::from_plane(mosaic_rggb(img)).unwrap()
    }

    fn scene(w: usize, h: usize) -> RgbImage {
        crate::synth::BlobScene::new(w, h, 60, 3).render(w, h)
    }

    #[test]
    fn base_only_zero_offset_hits_own_sample() {
        let f = frame_from(&scene(16, 16));
        let mut acc = Accumulator::for_frame(16, 16, 1.0);
        let kernels = KernelField::uniform(8, 8, Sym2::diag(0.5, 0.5));
        accumulate_frame(
            &mut acc,
            &f,
            &AlignmentField::zeros(16, 16, 16, 0),
            &kernels,
            &RobustnessMask::ones(8, 8, 0),
        );
        for y in 0..16 {
            for x in 0..16 {
                let c = f.channel_at(x, y);
                let (num, den) = acc.sums_at(x, y, c);
                // red/blue neighbours lie outside the 3x3 gather; green
                // also collects its in-bounds diagonal neighbours at d^2 = 2
                let mut want_num = f.data().get(x, y) as f64;
                let mut want_den = 1.0;
                if c == 1 {
                    let wd = (-0.5f64 * 2.0 / 0.5).exp();
                    for (dx, dy) in [(-1, -1), (1, -1), (-1, 1), (1, 1)] {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        if (0..16).contains(&nx) && (0..16).contains(&ny) {
                            want_den += wd;
                            want_num += wd * f.data().get(nx as usize, ny as usize) as f64;
                        }
                    }
                }
                assert_abs_diff_eq!(den, want_den, epsilon = 1e-9);
                assert_abs_diff_eq!(num, want_num, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn zero_mask_leaves_accumulator_empty() {
        let f = frame_from(&scene(16, 16));
        let mut acc = Accumulator::for_frame(16, 16, 1.5);
        let kernels = KernelField::uniform(8, 8, Sym2::IDENTITY);
        let mask = RobustnessMask {
            values: Plane::new(8, 8),
            frame_index: 1,
        };
        accumulate_frame(
            &mut acc,
            &f,
            &AlignmentField::zeros(16, 16, 16, 1),
            &kernels,
            &mask,
        );
        assert!(acc.is_empty());
    }

    #[test]
    fn constant_burst_is_conserved() {
        let img = RgbImage::filled(32, 32, [0.3, 0.55, 0.8]);
        let f = frame_from(&img);
        let burst = Burst::new(vec![f.clone(), f.clone(), f], 0, NoiseParams::default()).unwrap();
        for zoom in [1.0, 1.5, 2.0] {
            let out = merge_burst(
                &burst,
                &MergeConfig {
                    zoom,
                    ..Default::default()
                },
            )
            .unwrap();
            let (ow, oh) = out.image.dims();
            for y in 0..oh {
                for x in 0..ow {
                    assert_eq!(out.image.get(x, y), [0.3, 0.55, 0.8]);
                }
            }
        }
    }

    #[test]
    fn zero_offset_burst_reproduces_cfa_samples() {
        let truth = scene(32, 32);
        let f = frame_from(&truth);
        let burst = Burst::new(vec![f.clone(), f.clone()], 0, NoiseParams::default()).unwrap();
        let out = merge_burst(&burst, &MergeConfig::default()).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let c = f.channel_at(x, y);
                if c == 1 {
                    continue;
                }
                assert_abs_diff_eq!(
                    out.image.channel(c).get(x, y),
                    truth.channel(c).get(x, y),
                    epsilon = 1e-6
                );
            }
        }
    }

    #[test]
    fn fallback_uses_baseline() {
        let f = frame_from(&scene(8, 8));
        let acc = Accumulator::for_frame(8, 8, 1.0);
        let out = finalize_merge(&acc, &f);
        assert_eq!(out, bilinear_demosaic_baseline(&f));
    }

    #[test]
    fn finishing_examples() {
        let c = RgbImage::filled(16, 16, [0.5; 3]);
        let no_curve = FinishConfig {
            tone_curve: false,
            ..Default::default()
        };
        assert_eq!(finish_image(&c, &no_curve), c);
        assert_abs_diff_eq!(0.5f64.powf(1.0 / 2.2), 0.7297, epsilon = 1e-4);
        let g = 0.5f64.powf(1.0 / 2.2);
        assert_abs_diff_eq!(
            tone_curve(0.5),
            3.0 * g * g - 2.0 * g * g * g,
            epsilon = 1e-12
        );
        assert_eq!(tone_curve(0.0), 0.0);
        assert_eq!(tone_curve(1.0), 1.0);
    }

    #[test]
    fn output_dims_even() {
        assert_eq!(output_dims(64, 48, 1.0), (64, 48));
        assert_eq!(output_dims(64, 48, 1.5), (96, 72));
        assert_eq!(output_dims(30, 30, 1.3), (38, 38));
        assert_eq!(output_dims(10, 10, 3.0), (30, 30));
    }

    #[test]
    fn config_validation() {
        assert!(MergeConfig {
            zoom: 3.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MergeConfig {
            zoom: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(MergeConfig::default().validate().is_ok());
        assert_eq!(
            AlignmentMode::parse("oracle").unwrap(),
            AlignmentMode::Oracle
        );
        assert!(AlignmentMode::parse("magic").is_err());
    }
}
