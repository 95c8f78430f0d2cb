//! Raw Bayer frames, bursts and the half-resolution images derived from them.

use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};
use crate::noise::NoiseParams;

/// Default maximum number of frames in a burst.
pub const DEFAULT_FRAME_CAP: usize = 15;

/// Color filter array layout. Only RGGB is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CfaPattern {
    #[default]
    Rggb,
}

impl CfaPattern {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RGGB" => Ok(CfaPattern::Rggb),
            other => Err(Error::UnsupportedPattern(other.to_string())),
        }
    }

    /// Color channel (0 = R, 1 = G, 2 = B) of the sample at `(x, y)`.
    #[inline]
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        match self {
            CfaPattern::Rggb => (x & 1) + (y & 1),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CfaPattern::Rggb => "RGGB",
        }
    }
}

/// One raw CFA frame, normalized to [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct BayerFrame {
    data: Plane,
    pattern: CfaPattern,
    black_level: u32,
    white_level: u32,
    exposure_tag: String,
}

impl BayerFrame {
    /// Normalizes raw integer samples with `(v - black) / (white - black)`,
    /// clamped to [0, 1].
    pub fn from_raw(
        width: usize,
        height: usize,
        raw: &[u16],
        black_level: u32,
        white_level: u32,
    ) -> Result<Self> {
        if white_level <= black_level {
            return Err(Error::InvalidArgument(format!(
                "white level {white_level} must exceed black level {black_level}"
            )));
        }
        if raw.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "raw buffer of {} samples does not match {width}x{height}",
                raw.len()
            )));
        }
        let range = (white_level - black_level) as f64;
        let data = raw
            .iter()
            .map(|&v| ((v as f64 - black_level as f64) / range).clamp(0.0, 1.0) as f32)
            .collect();
        let mut frame = Self::from_plane(Plane::from_vec(width, height, data)?)?;
        frame.black_level = black_level;
        frame.white_level = white_level;
        Ok(frame)
    }

    /// Wraps already-normalized data. Values are clamped to [0, 1]; the
    /// recorded levels are the full 16-bit range.
    pub fn from_plane(mut data: Plane) -> Result<Self> {
        let (width, height) = data.dims();
        if width == 0 || height == 0 || width % 2 != 0 || height % 2 != 0 {
            return Err(Error::OddDimensions { width, height });
        }
        for v in data.data_mut() {
            *v = if v.is_finite() {
                v.clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(Self {
            data,
            pattern: CfaPattern::Rggb,
            black_level: 0,
            white_level: u16::MAX as u32,
            exposure_tag: String::new(),
        })
    }

    pub fn with_exposure_tag(mut self, tag: impl Into<String>) -> Self {
        self.exposure_tag = tag.into();
        self
    }

    pub fn with_levels(mut self, black_level: u32, white_level: u32) -> Self {
        self.black_level = black_level;
        self.white_level = white_level;
        self
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.data.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.data.height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.data.dims()
    }

    pub fn data(&self) -> &Plane {
        &self.data
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn black_level(&self) -> u32 {
        self.black_level
    }

    pub fn white_level(&self) -> u32 {
        self.white_level
    }

    pub fn exposure_tag(&self) -> &str {
        &self.exposure_tag
    }

    #[inline]
    pub fn channel_at(&self, x: usize, y: usize) -> usize {
        self.pattern.channel_at(x, y)
    }

    /// Multiplies every sample by `alpha`, clamping to [0, 1].
    pub fn scaled(&self, alpha: f32) -> BayerFrame {
        let mut out = self.clone();
        out.data = self.data.map(|v| (v * alpha).clamp(0.0, 1.0));
        out
    }
}

/// An ordered set of frames sharing geometry, with a designated base frame.
#[derive(Clone, Debug)]
pub struct Burst {
    frames: Vec<BayerFrame>,
    base_index: usize,
    noise: NoiseParams,
}

impl Burst {
    pub fn new(frames: Vec<BayerFrame>, base_index: usize, noise: NoiseParams) -> Result<Self> {
        Self::with_cap(frames, base_index, noise, DEFAULT_FRAME_CAP)
    }

    pub fn with_cap(
        frames: Vec<BayerFrame>,
        base_index: usize,
        noise: NoiseParams,
        cap: usize,
    ) -> Result<Self> {
        let first = frames.first().ok_or(Error::EmptyBurst)?;
        if frames.len() > cap {
            return Err(Error::TooManyFrames {
                count: frames.len(),
                cap,
            });
        }
        if base_index >= frames.len() {
            return Err(Error::InvalidBaseIndex {
                index: base_index,
                len: frames.len(),
            });
        }
        for f in &frames[1..] {
            if f.dims() != first.dims() {
                return Err(Error::DimensionMismatch {
                    expected: first.dims(),
                    found: f.dims(),
                });
            }
            if f.pattern() != first.pattern() {
                return Err(Error::UnsupportedPattern(f.pattern().as_str().to_string()));
            }
        }
        Ok(Self {
            frames,
            base_index,
            noise,
        })
    }

    pub fn frames(&self) -> &[BayerFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    pub fn base(&self) -> &BayerFrame {
        &self.frames[self.base_index]
    }

    pub fn noise(&self) -> NoiseParams {
        self.noise
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }

    /// The first `n` frames. The base frame must be among them.
    pub fn prefix(&self, n: usize) -> Result<Burst> {
        let n = n.min(self.frames.len());
        Burst::with_cap(
            self.frames[..n].to_vec(),
            self.base_index,
            self.noise,
            self.frames.len().max(n),
        )
    }

    /// Reorders frames with `order[k]` = old index of the new k-th frame.
    pub fn permuted(&self, order: &[usize]) -> Result<Burst> {
        if order.len() != self.frames.len() {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let frames: Vec<_> = order.iter().map(|&i| self.frames[i].clone()).collect();
        let base = order
            .iter()
            .position(|&i| i == self.base_index)
            .ok_or_else(|| Error::InvalidArgument("permutation drops the base frame".into()))?;
        Burst::with_cap(frames, base, self.noise, self.frames.len())
    }
}

/// Half-resolution single-channel luminance (mean of each Bayer quad).
#[derive(Clone, Debug, PartialEq)]
pub struct LumaImage(pub Plane);

impl LumaImage {
    pub fn plane(&self) -> &Plane {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }
}

/// Half-resolution RGB built from Bayer quads: R and B copied, greens averaged.
#[derive(Clone, Debug, PartialEq)]
pub struct GuideImage {
    pub r: Plane,
    pub g: Plane,
    pub b: Plane,
}

impl GuideImage {
    pub fn dims(&self) -> (usize, usize) {
        self.r.dims()
    }

    pub fn channel(&self, c: usize) -> &Plane {
        match c {
            0 => &self.r,
            1 => &self.g,
            _ => &self.b,
        }
    }
}

/// Quad samples in RGGB order: (R, G1, G2, B).
#[inline]
fn quad(frame: &BayerFrame, qx: usize, qy: usize) -> (f32, f32, f32, f32) {
    let p = frame.data();
    let (x, y) = (2 * qx, 2 * qy);
    (
        p.get(x, y),
        p.get(x + 1, y),
        p.get(x, y + 1),
        p.get(x + 1, y + 1),
    )
}

pub fn decimate_luma(frame: &BayerFrame) -> LumaImage {
    let (w, h) = (frame.width() / 2, frame.height() / 2);
    LumaImage(Plane::from_fn(w, h, |x, y| {
        let (r, g1, g2, b) = quad(frame, x, y);
        (r + g1 + g2 + b) * 0.25
    }))
}

pub fn build_guide_image(frame: &BayerFrame) -> GuideImage {
    let (w, h) = (frame.width() / 2, frame.height() / 2);
    let mut r = Plane::new(w, h);
    let mut g = Plane::new(w, h);
    let mut b = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (qr, g1, g2, qb) = quad(frame, x, y);
            r.set(x, y, qr);
            g.set(x, y, (g1 + g2) * 0.5);
            b.set(x, y, qb);
        }
    }
    GuideImage { r, g, b }
}

/// Reflects an out-of-range index by whole Bayer periods so the color
/// phase of the replicated sample matches.
#[inline]
fn reflect_cfa(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    while i < 0 {
        i += 2;
    }
    while i >= n {
        i -= 2;
    }
    i as usize
}

/// Classic per-channel bilinear demosaic at full resolution.
pub fn bilinear_demosaic_baseline(frame: &BayerFrame) -> RgbImage {
    let (w, h) = frame.dims();
    let p = frame.data();
    let at = |x: isize, y: isize| p.get(reflect_cfa(x, w), reflect_cfa(y, h));
    let cross =
        |x: isize, y: isize| (at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1)) * 0.25;
    let diag = |x: isize, y: isize| {
        (at(x - 1, y - 1) + at(x + 1, y - 1) + at(x - 1, y + 1) + at(x + 1, y + 1)) * 0.25
    };
    let horiz = |x: isize, y: isize| (at(x - 1, y) + at(x + 1, y)) * 0.5;
    let vert = |x: isize, y: isize| (at(x, y - 1) + at(x, y + 1)) * 0.5;

    RgbImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let v = p.get(x, y);
        match (x & 1, y & 1) {
            (0, 0) => [v, cross(xi, yi), diag(xi, yi)],
            (1, 1) => [diag(xi, yi), cross(xi, yi), v],
            // green on a red row: red left/right, blue above/below
            (1, 0) => [horiz(xi, yi), v, vert(xi, yi)],
            _ => [vert(xi, yi), v, horiz(xi, yi)],
        }
    })
}

/// Samples an RGB image through the RGGB mosaic, discarding two of the three
/// channels at every pixel.
pub fn mosaic_rggb(rgb: &RgbImage) -> Plane {
    let (w, h) = rgb.dims();
    Plane::from_fn(w, h, |x, y| {
        rgb.channel(CfaPattern::Rggb.channel_at(x, y)).get(x, y)
    })
}
