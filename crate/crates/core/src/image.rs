//! Dense floating point image planes.
//!
//! Every sampling helper here replicates the border: reads outside the plane
//! are clamped to the nearest edge pixel.

use crate::error::{Error, Result};

/// A single-channel image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "plane buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Reads with clamped-border replication.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers sit on
    /// integers).
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi) as f64;
        let b = self.get_clamped(xi + 1, yi) as f64;
        let c = self.get_clamped(xi, yi + 1) as f64;
        let d = self.get_clamped(xi + 1, yi + 1) as f64;
        let top = a + (b - a) * fx;
        let bottom = c + (d - c) * fx;
        top + (bottom - top) * fy
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Plane {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        Plane::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Separable box filter with a `(2r+1)` square support.
    pub fn box_filter(&self, radius: usize) -> Plane {
        let r = radius as isize;
        let norm = 1.0 / (2 * radius + 1) as f64;
        let horiz = Plane::from_fn(self.width, self.height, |x, y| {
            let mut s = 0.0f64;
            for dx in -r..=r {
                s += self.get_clamped(x as isize + dx, y as isize) as f64;
            }
            (s * norm) as f32
        });
        Plane::from_fn(self.width, self.height, |x, y| {
            let mut s = 0.0f64;
            for dy in -r..=r {
                s += horiz.get_clamped(x as isize, y as isize + dy) as f64;
            }
            (s * norm) as f32
        })
    }

    /// Separable Gaussian blur, kernel truncated at 3 sigma.
    pub fn gaussian_blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let radius = (3.0 * sigma).ceil() as isize;
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        let horiz = Plane::from_fn(self.width, self.height, |x, y| {
            let mut s = 0.0;
            for (k, dx) in kernel.iter().zip(-radius..=radius) {
                s += k * self.get_clamped(x as isize + dx, y as isize) as f64;
            }
            s as f32
        });
        Plane::from_fn(self.width, self.height, |x, y| {
            let mut s = 0.0;
            for (k, dy) in kernel.iter().zip(-radius..=radius) {
                s += k * horiz.get_clamped(x as isize, y as isize + dy) as f64;
            }
            s as f32
        })
    }
}

/// A three-channel (R, G, B) image in linear floating point.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    channels: [Plane; 3],
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            channels: [
                Plane::new(width, height),
                Plane::new(width, height),
                Plane::new(width, height),
            ],
        }
    }

    pub fn from_planes(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        if r.dims() != g.dims() || r.dims() != b.dims() {
            return Err(Error::DimensionMismatch {
                expected: r.dims(),
                found: if r.dims() != g.dims() {
                    g.dims()
                } else {
                    b.dims()
                },
            });
        }
        Ok(Self {
            channels: [r, g, b],
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Self {
        let mut img = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.set(x, y, f(x, y));
            }
        }
        img
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self {
            channels: rgb.map(|v| Plane::filled(width, height, v)),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &Plane {
        &self.channels[c]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut Plane {
        &mut self.channels[c]
    }

    pub fn channels(&self) -> &[Plane; 3] {
        &self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        [
            self.channels[0].get(x, y),
            self.channels[1].get(x, y),
            self.channels[2].get(x, y),
        ]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        for (c, v) in rgb.into_iter().enumerate() {
            self.channels[c].set(x, y, v);
        }
    }

    pub fn map_channels(&self, f: impl Fn(&Plane) -> Plane) -> RgbImage {
        RgbImage {
            channels: [
                f(&self.channels[0]),
                f(&self.channels[1]),
                f(&self.channels[2]),
            ],
        }
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> RgbImage {
        self.map_channels(|p| p.crop(x0, y0, w, h))
    }

    /// Removes `border` pixels from every side.
    pub fn crop_border(&self, border: usize) -> RgbImage {
        let (w, h) = self.dims();
        if 2 * border >= w || 2 * border >= h {
            return self.clone();
        }
        self.crop(border, border, w - 2 * border, h - 2 * border)
    }

    /// Center crop to at most `size`x`size`, keeping both sides even.
    pub fn center_crop(&self, size: usize) -> RgbImage {
        let (w, h) = self.dims();
        let cw = w.min(size) & !1;
        let ch = h.min(size) & !1;
        self.crop((w - cw) / 2, (h - ch) / 2, cw, ch)
    }

    /// Mean of R, G and B.
    pub fn luminance(&self) -> Plane {
        let (w, h) = self.dims();
        Plane::from_fn(w, h, |x, y| {
            let [r, g, b] = self.get(x, y);
            (r + g + b) / 3.0
        })
    }

    /// Averages non-overlapping `factor`x`factor` blocks.
    pub fn box_downsample(&self, factor: usize) -> RgbImage {
        let (w, h) = (self.width() / factor, self.height() / factor);
        let norm = 1.0 / (factor * factor) as f64;
        self.map_channels(|p| {
            Plane::from_fn(w, h, |x, y| {
                let mut s = 0.0f64;
                for j in 0..factor {
                    for i in 0..factor {
                        s += p.get(x * factor + i, y * factor + j) as f64;
                    }
                }
                (s * norm) as f32
            })
        })
    }

    pub fn clamp01(&self) -> RgbImage {
        self.map_channels(|p| p.map(|v| v.clamp(0.0, 1.0)))
    }
}
