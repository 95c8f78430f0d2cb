//! Synthetic bursts and alignment corruptions.
//!
//! A ground-truth RGB image is shifted per frame (nearest-neighbour
//! resampling) and mosaicked to RGGB. Ground-truth alignment fields for
//! these bursts are exact, which makes them the oracle for registration
//! tests and for the corruption experiments.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::align::AlignmentField;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::noise::{noise_variance_at, NoiseParams};
use crate::raw::{mosaic_rggb, BayerFrame, Burst, DEFAULT_FRAME_CAP};

/// Per-frame sub-pixel offsets of a synthetic burst. Frame `k` shows the
/// truth translated by `offsets[k]`: `frame(x) = truth(x - offset)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetList {
    pub offsets: Vec<[f64; 2]>,
    pub rng_seed: u64,
}

impl OffsetList {
    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Writes `frame,dx,dy` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["frame", "dx", "dy"]).map_err(csv_err)?;
        for (i, o) in self.offsets.iter().enumerate() {
            w.write_record([i.to_string(), o[0].to_string(), o[1].to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut rows: Vec<(usize, [f64; 2])> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", rec.len())));
            }
            let i: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad frame `{}`", &rec[0])))?;
            let dx: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad dx `{}`", &rec[1])))?;
            let dy: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad dy `{}`", &rec[2])))?;
            rows.push((i, [dx, dy]));
        }
        rows.sort_by_key(|r| r.0);
        if rows.iter().enumerate().any(|(k, r)| r.0 != k) {
            return Err(bad("frame indices must be 0..n without gaps".into()));
        }
        Ok(Self {
            offsets: rows.into_iter().map(|r| r.1).collect(),
            rng_seed: 0,
        })
    }
}

/// Draws `n` i.i.d. bivariate Gaussian offsets with per-axis std `sigma`;
/// frame 0 (the base) is pinned to the origin.
pub fn generate_burst_offsets(n: usize, sigma: f64, seed: u64) -> OffsetList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets = (0..n)
        .map(|i| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            if i == 0 {
                [0.0, 0.0]
            } else {
                [a * sigma, b * sigma]
            }
        })
        .collect();
    OffsetList {
        offsets,
        rng_seed: seed,
    }
}

/// Integer translation that nearest-neighbour resampling actually applies
/// for a continuous offset: `round_half_up(x - d) = x - effective_shift(d)`.
#[inline]
pub fn effective_shift(d: f64) -> f64 {
    -(0.5 - d).floor()
}

/// Options for [`synthesize_burst_with`].
#[derive(Clone, Debug, Default)]
pub struct SynthOptions {
    /// Heteroscedastic noise added to every frame (clamped to [0, 1]).
    pub noise: Option<NoiseParams>,
    pub noise_seed: u64,
}

/// Noise-free synthetic burst (base frame 0).
pub fn synthesize_burst(truth: &RgbImage, offsets: &OffsetList) -> Result<Burst> {
    synthesize_burst_with(truth, offsets, &SynthOptions::default())
}

fn check_offsets(w: usize, h: usize, offsets: &OffsetList) -> Result<()> {
    if offsets.is_empty() {
        return Err(Error::EmptyBurst);
    }
    if !w.is_multiple_of(2) || !h.is_multiple_of(2) || w == 0 || h == 0 {
        return Err(Error::OddDimensions {
            width: w,
            height: h,
        });
    }
    let limit = w.min(h) as f64 / 4.0;
    for o in &offsets.offsets {
        if !o[0].is_finite() || !o[1].is_finite() || o[0].hypot(o[1]) > limit {
            return Err(Error::OffsetTooLarge {
                dx: o[0],
                dy: o[1],
                limit,
            });
        }
    }
    Ok(())
}

fn add_noise(frame: &mut crate::image::Plane, params: NoiseParams, seed: u64, stream: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    for v in frame.data_mut() {
        let std = noise_variance_at(*v as f64, params).sqrt();
        let n: f64 = StandardNormal.sample(&mut rng);
        *v = (*v as f64 + std * n).clamp(0.0, 1.0) as f32;
    }
}

fn assemble_burst(mut planes: Vec<crate::image::Plane>, opts: &SynthOptions) -> Result<Burst> {
    let noise = opts.noise.unwrap_or_default();
    if let Some(params) = opts.noise {
        for (i, p) in planes.iter_mut().enumerate() {
            add_noise(p, params, opts.noise_seed, i as u64);
        }
    }
    let frames = planes
        .into_iter()
        .map(|p| BayerFrame::from_plane(p).map(|f| f.with_exposure_tag("synthetic")))
        .collect::<Result<Vec<_>>>()?;
    let cap = frames.len().max(DEFAULT_FRAME_CAP);
    Burst::with_cap(frames, 0, noise, cap)
}

/// Shifts the truth per frame with nearest-neighbour sampling (ties round
/// up, clamped borders), mosaics to RGGB and optionally adds noise.
pub fn synthesize_burst_with(
    truth: &RgbImage,
    offsets: &OffsetList,
    opts: &SynthOptions,
) -> Result<Burst> {
    let (w, h) = truth.dims();
    check_offsets(w, h, offsets)?;
    let planes = offsets
        .offsets
        .iter()
        .map(|o| {
            let (sx, sy) = (
                effective_shift(o[0]) as isize,
                effective_shift(o[1]) as isize,
            );
            let shifted = RgbImage::from_fn(w, h, |x, y| {
                let xs = (x as isize - sx).clamp(0, w as isize - 1) as usize;
                let ys = (y as isize - sy).clamp(0, h as isize - 1) as usize;
                truth.get(xs, ys)
            });
            mosaic_rggb(&shifted)
        })
        .collect();
    assemble_burst(planes, opts)
}

/// Renders a burst from a continuous scene `f(x, y) -> rgb` evaluated at
/// `(x - dx, y - dy)` for every frame, so sub-pixel offsets are exact.
pub fn render_shifted(
    f: impl Fn(f64, f64) -> [f32; 3],
    width: usize,
    height: usize,
    offsets: &OffsetList,
    opts: &SynthOptions,
) -> Result<Burst> {
    check_offsets(width, height, offsets)?;
    let planes = offsets
        .offsets
        .iter()
        .map(|o| {
            let img = RgbImage::from_fn(width, height, |x, y| f(x as f64 - o[0], y as f64 - o[1]));
            mosaic_rggb(&img)
        })
        .collect();
    assemble_burst(planes, opts)
}

/// A smooth, non-periodic colour scene made of random Gaussian blobs over a
/// mid-grey background. Blob radii of several pixels keep it band-limited
/// well below the half-resolution Nyquist rate, so continuous sub-pixel
/// shifts can be rendered exactly by evaluation.
#[derive(Clone, Debug)]
pub struct BlobScene {
    blobs: Vec<([f64; 2], f64, [f64; 3])>,
}

impl BlobScene {
    /// `count` blobs scattered over (and slightly beyond) a `width`x`height`
    /// canvas.
    pub fn new(width: usize, height: usize, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs = (0..count)
            .map(|_| {
                let c = [
                    rng.gen_range(-8.0..width as f64 + 8.0),
                    rng.gen_range(-8.0..height as f64 + 8.0),
                ];
                let r = rng.gen_range(3.0..9.0);
                let amp = [
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                    rng.gen_range(-0.3..0.3),
                ];
                (c, r, amp)
            })
            .collect();
        Self { blobs }
    }

    pub fn eval(&self, x: f64, y: f64) -> [f32; 3] {
        let mut v = [0.5f64; 3];
        for (c, r, amp) in &self.blobs {
            let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
            let g = (-0.5 * d2 / (r * r)).exp();
            for k in 0..3 {
                v[k] += amp[k] * g;
            }
        }
        v.map(|c| c.clamp(0.0, 1.0) as f32)
    }

    /// Renders the unshifted scene.
    pub fn render(&self, width: usize, height: usize) -> RgbImage {
        RgbImage::from_fn(width, height, |x, y| self.eval(x as f64, y as f64))
    }
}

/// Ground-truth fields for a burst built by [`synthesize_burst`]: the
/// effective integer shift of every frame on every tile.
pub fn oracle_fields(
    offsets: &OffsetList,
    width: usize,
    height: usize,
    tile_size: usize,
) -> Vec<AlignmentField> {
    offsets
        .offsets
        .iter()
        .enumerate()
        .map(|(i, o)| {
            AlignmentField::uniform(
                width,
                height,
                tile_size,
                i,
                [effective_shift(o[0]), effective_shift(o[1])],
            )
        })
        .collect()
}

/// Ground-truth fields for a burst built by [`render_shifted`].
pub fn continuous_oracle_fields(
    offsets: &OffsetList,
    width: usize,
    height: usize,
    tile_size: usize,
) -> Vec<AlignmentField> {
    offsets
        .offsets
        .iter()
        .enumerate()
        .map(|(i, o)| AlignmentField::uniform(width, height, tile_size, i, *o))
        .collect()
}

/// Offsets of a burst drifting with constant velocity (px per frame).
pub fn linear_motion_offsets(n: usize, velocity: [f64; 2]) -> OffsetList {
    OffsetList {
        offsets: (0..n)
            .map(|k| [velocity[0] * k as f64, velocity[1] * k as f64])
            .collect(),
        rng_seed: 0,
    }
}

/// Which corruption to apply to an alignment field.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptionMode {
    TileReplace,
    VectorNoise,
}

impl CorruptionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CorruptionMode::TileReplace => "tile_replace",
            CorruptionMode::VectorNoise => "vector_noise",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "tile_replace" => Ok(CorruptionMode::TileReplace),
            "vector_noise" => Ok(CorruptionMode::VectorNoise),
            other => Err(Error::InvalidArgument(format!(
                "unknown corruption mode `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionSpec {
    pub mode: CorruptionMode,
    /// Fraction of tiles replaced (tile_replace).
    pub p: f64,
    /// Per-axis noise std in pixels (vector_noise).
    pub sigma: f64,
    pub rng_seed: u64,
}

impl CorruptionSpec {
    pub fn tile_replace(p: f64, rng_seed: u64) -> Self {
        Self {
            mode: CorruptionMode::TileReplace,
            p,
            sigma: 0.0,
            rng_seed,
        }
    }

    pub fn vector_noise(sigma: f64, rng_seed: u64) -> Self {
        Self {
            mode: CorruptionMode::VectorNoise,
            p: 0.0,
            sigma,
            rng_seed,
        }
    }

    /// Rejects p outside [0, 1] and negative or non-finite sigma.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidArgument(format!(
                "corruption fraction {} outside [0, 1]",
                self.p
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "vector noise sigma {} must be >= 0",
                self.sigma
            )));
        }
        Ok(())
    }

    /// The swept parameter (p or sigma).
    pub fn level(&self) -> f64 {
        match self.mode {
            CorruptionMode::TileReplace => self.p,
            CorruptionMode::VectorNoise => self.sigma,
        }
    }

    /// Same spec with the seed mixed with a frame index, so each frame of a
    /// burst is corrupted independently.
    pub fn for_frame(&self, frame: usize) -> Self {
        Self {
            rng_seed: self.rng_seed ^ (frame as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            ..*self
        }
    }
}

/// Replaces `round(p * tiles)` uniformly chosen tiles with the alignment of
/// a uniformly chosen other tile. The donor vector is re-anchored at the
/// victim tile (`v_j + center_j - center_i`), so the victim fetches the
/// donor tile's content: a wrong but in-bounds match. Other tiles are left
/// bit-identical.
pub fn corrupt_alignment_tiles(field: &AlignmentField, spec: &CorruptionSpec) -> AlignmentField {
    let (gw, gh) = field.grid_dims();
    let n = gw * gh;
    let count = ((spec.p.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut out = field.clone();
    if count == 0 || n < 2 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let victims = sample(&mut rng, n, count);
    for i in victims.iter() {
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (ci, cj) = (
            field.tile_center(i % gw, i / gw),
            field.tile_center(j % gw, j / gw),
        );
        let vj = field.get(j % gw, j / gw);
        out.set(
            i % gw,
            i / gw,
            [vj[0] + cj[0] - ci[0], vj[1] + cj[1] - ci[1]],
        );
    }
    out
}

/// Adds i.i.d. zero-mean Gaussian noise with per-axis std `sigma` to every
/// tile vector.
pub fn jitter_alignment_vectors(field: &AlignmentField, spec: &CorruptionSpec) -> AlignmentField {
    let mut out = field.clone();
    if spec.sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, spec.sigma).expect("positive sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let (gw, gh) = field.grid_dims();
    for ty in 0..gh {
        for tx in 0..gw {
            let v = field.get(tx, ty);
            out.set(
                tx,
                ty,
                [
                    v[0] + normal.sample(&mut rng),
                    v[1] + normal.sample(&mut rng),
                ],
            );
        }
    }
    out
}

pub fn apply_corruption(field: &AlignmentField, spec: &CorruptionSpec) -> AlignmentField {
    match spec.mode {
        CorruptionMode::TileReplace => corrupt_alignment_tiles(field, spec),
        CorruptionMode::VectorNoise => jitter_alignment_vectors(field, spec),
    }
}
