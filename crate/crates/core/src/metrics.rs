//! Full-reference quality metrics.

use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};

/// Reported PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;
/// SSIM window side.
pub const SSIM_WINDOW: usize = 8;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_dims(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    Ok(())
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_dims(a, b)?;
    let mut sum = 0.0f64;
    let mut n = 0usize;
    for c in 0..3 {
        for (x, y) in a.channel(c).data().iter().zip(b.channel(c).data()) {
            let d = *x as f64 - *y as f64;
            sum += d * d;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    })
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let stride = w + 1;
        let mut s = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(x, y);
                s[(y + 1) * stride + x + 1] = s[y * stride + x + 1] + row;
            }
        }
        Self { w, s }
    }

    #[inline]
    fn window(&self, x: usize, y: usize, n: usize) -> f64 {
        let st = self.w + 1;
        self.s[(y + n) * st + x + n] - self.s[y * st + x + n] - self.s[(y + n) * st + x]
            + self.s[y * st + x]
    }
}

fn ssim_plane(a: &Plane, b: &Plane) -> (f64, usize) {
    let (w, h) = a.dims();
    let n = SSIM_WINDOW;
    if w < n || h < n {
        return (0.0, 0);
    }
    let av = |x: usize, y: usize| a.get(x, y) as f64;
    let bv = |x: usize, y: usize| b.get(x, y) as f64;
    let ia = Integral::new(w, h, av);
    let ib = Integral::new(w, h, bv);
    let iaa = Integral::new(w, h, |x, y| av(x, y) * av(x, y));
    let ibb = Integral::new(w, h, |x, y| bv(x, y) * bv(x, y));
    let iab = Integral::new(w, h, |x, y| av(x, y) * bv(x, y));
    let count = (n * n) as f64;
    let mut total = 0.0;
    let mut windows = 0;
    for y in 0..=h - n {
        for x in 0..=w - n {
            let ma = ia.window(x, y, n) / count;
            let mb = ib.window(x, y, n) / count;
            // unbiased window (co)variances
            let norm = count / (count - 1.0);
            let va = ((iaa.window(x, y, n) / count - ma * ma) * norm).max(0.0);
            let vb = ((ibb.window(x, y, n) / count - mb * mb) * norm).max(0.0);
            let cov = (iab.window(x, y, n) / count - ma * mb) * norm;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            total += num / den;
            windows += 1;
        }
    }
    (total, windows)
}

/// Mean SSIM over 8x8 windows at stride 1, averaged over channels.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_dims(a, b)?;
    let (mut total, mut windows) = (0.0, 0usize);
    for c in 0..3 {
        let (t, n) = ssim_plane(a.channel(c), b.channel(c));
        total += t;
        windows += n;
    }
    Ok(if windows == 0 {
        1.0
    } else {
        total / windows as f64
    })
}

/// Mean squared forward-difference gradient of `(R + G + B) / 3`. The last
/// column/row has no forward neighbour and contributes zero on that axis.
pub fn sharpness(img: &RgbImage) -> f64 {
    let l = img.luminance();
    let (w, h) = l.dims();
    if w == 0 || h == 0 {
        return 0.0;
    }
    let mut gx = 0.0f64;
    let mut gy = 0.0f64;
    let mut nx = 0usize;
    let mut ny = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                let d = l.get(x + 1, y) as f64 - l.get(x, y) as f64;
                gx += d * d;
                nx += 1;
            }
            if y + 1 < h {
                let d = l.get(x, y + 1) as f64 - l.get(x, y) as f64;
                gy += d * d;
                ny += 1;
            }
        }
    }
    let mx = if nx == 0 { 0.0 } else { gx / nx as f64 };
    let my = if ny == 0 { 0.0 } else { gy / ny as f64 };
    mx + my
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pattern(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let v = 0.5 + 0.4 * ((x as f32 * 0.7).sin() * (y as f32 * 0.4).cos());
            [v, 1.0 - v, 0.5 * v + 0.2]
        })
    }

    #[test]
    fn psnr_examples() {
        let a = pattern(16, 16);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let z = RgbImage::filled(8, 8, [0.2, 0.2, 0.2]);
        let e = RgbImage::filled(8, 8, [0.3, 0.3, 0.3]);
        assert_abs_diff_eq!(psnr(&z, &e).unwrap(), 20.0, epsilon = 1e-5);
        let e = RgbImage::filled(8, 8, [0.21, 0.21, 0.21]);
        assert_abs_diff_eq!(psnr(&z, &e).unwrap(), 40.0, epsilon = 1e-4);
        assert!(psnr(&z, &pattern(4, 4)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = pattern(24, 24);
        assert_abs_diff_eq!(ssim(&a, &a).unwrap(), 1.0, epsilon = 1e-9);
        let inv = a.map_channels(|p| p.map(|v| 1.0 - v));
        assert!(ssim(&a, &inv).unwrap() < 0.5);
        // single-window closed form for constants m and m+0.5
        let (m1, m2) = (0.2f64, 0.7f64);
        let c1 = RgbImage::filled(8, 8, [m1 as f32; 3]);
        let c2 = RgbImage::filled(8, 8, [m2 as f32; 3]);
        let expected = (2.0 * m1 * m2 + SSIM_C1) / (m1 * m1 + m2 * m2 + SSIM_C1);
        let got = ssim(&c1, &c2).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-6);
        assert!(got < 1.0);
    }

    #[test]
    fn sharpness_examples() {
        assert_eq!(sharpness(&RgbImage::filled(8, 8, [0.4; 3])), 0.0);
        let ramp = RgbImage::from_fn(8, 8, |x, _| [x as f32; 3]);
        assert_abs_diff_eq!(sharpness(&ramp), 1.0, epsilon = 1e-12);
        let a = pattern(32, 32);
        let blurred = a.map_channels(|p| p.gaussian_blur(1.5));
        assert!(sharpness(&blurred) < sharpness(&a));
    }
}
