//! File formats: 16-bit Bayer frames with key=value sidecars, burst
//! directories, 16-bit RGB output and 8-bit debug heatmaps.
//!
//! A burst directory holds `frame_NNN.png` (or `.pgm`) files plus a shared
//! `burst.txt` sidecar. A frame may carry its own `frame_NNN.txt` sidecar,
//! which takes precedence for that frame.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::{Plane, RgbImage};
use crate::noise::NoiseParams;
use crate::raw::{BayerFrame, Burst, CfaPattern};

/// Shared sidecar file name inside a burst directory.
pub const BURST_SIDECAR: &str = "burst.txt";

/// Parsed sidecar contents.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub pattern: CfaPattern,
    pub black: u32,
    pub white: u32,
    pub noise: NoiseParams,
    /// Optional `base=` entry (burst sidecars only).
    pub base_index: Option<usize>,
    pub exposure_tag: Option<String>,
}

impl Sidecar {
    /// Sidecar for frames stored with the full 16-bit range.
    pub fn full_range(noise: NoiseParams) -> Self {
        Self {
            pattern: CfaPattern::Rggb,
            black: 0,
            white: 65535,
            noise,
            base_index: None,
            exposure_tag: None,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "pattern={}\nblack={}\nwhite={}\nnoise_slope={}\nnoise_intercept={}\n",
            self.pattern.as_str(),
            self.black,
            self.white,
            self.noise.slope,
            self.noise.intercept
        );
        if let Some(b) = self.base_index {
            s.push_str(&format!("base={b}\n"));
        }
        if let Some(t) = &self.exposure_tag {
            s.push_str(&format!("exposure_tag={t}\n"));
        }
        s
    }
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let invalid = |message: String| Error::InvalidSidecar {
        path: path.to_path_buf(),
        message,
    };
    let map = parse_key_values(&text).map_err(invalid)?;
    let get = |field: &'static str| {
        map.get(field).ok_or(Error::MissingSidecarField {
            path: path.to_path_buf(),
            field,
        })
    };
    let pattern = CfaPattern::parse(get("pattern")?)?;
    let int = |field: &'static str| -> Result<u32> {
        get(field)?
            .parse()
            .map_err(|_| invalid(format!("`{field}` is not a non-negative integer")))
    };
    let float = |field: &'static str| -> Result<f64> {
        let v: f64 = get(field)?
            .parse()
            .map_err(|_| invalid(format!("`{field}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(format!("`{field}` is not finite")))
        }
    };
    let black = int("black")?;
    let white = int("white")?;
    if white <= black {
        return Err(invalid(format!(
            "white level {white} must exceed black level {black}"
        )));
    }
    let noise = NoiseParams::new(float("noise_slope")?, float("noise_intercept")?)
        .map_err(|e| invalid(e.to_string()))?;
    let base_index = match map.get("base") {
        Some(v) => Some(
            v.parse()
                .map_err(|_| invalid("`base` is not an index".into()))?,
        ),
        None => None,
    };
    Ok(Sidecar {
        pattern,
        black,
        white,
        noise,
        base_index,
        exposure_tag: map.get("exposure_tag").cloned(),
    })
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn describe(img: &DynamicImage) -> String {
    format!("{:?}", img.color())
}

/// Loads a 16-bit single-channel PGM/PNG and normalizes it with the
/// sidecar's black and white levels.
pub fn load_bayer_frame(path: &Path, sidecar_path: &Path) -> Result<BayerFrame> {
    let meta = read_sidecar(sidecar_path)?;
    load_bayer_frame_with(path, &meta)
}

pub fn load_bayer_frame_with(path: &Path, meta: &Sidecar) -> Result<BayerFrame> {
    let img = open_image(path)?;
    let luma = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                found: describe(&other),
            })
        }
    };
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::OddDimensions {
            width: w,
            height: h,
        });
    }
    let frame = BayerFrame::from_raw(w, h, luma.as_raw(), meta.black, meta.white)?;
    let tag = meta.exposure_tag.clone().unwrap_or_else(|| {
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Ok(frame.with_exposure_tag(tag))
}

fn to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) as f64 * 65535.0).round() as u16
}

/// Writes a frame as a 16-bit grayscale PNG using the full range.
pub fn save_bayer_frame(frame: &BayerFrame, path: &Path) -> Result<()> {
    let (w, h) = frame.dims();
    let raw: Vec<u16> = frame.data().data().iter().map(|&v| to_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer matches dims");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p
            .file_name()
            .map(|n| n.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        let ext = p
            .extension()
            .map(|e| e.to_string_lossy().to_lowercase())
            .unwrap_or_default();
        if name.starts_with("frame_") && (ext == "png" || ext == "pgm") {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Loads every `frame_*` image of a burst directory in name order.
pub fn load_burst_dir(dir: &Path, cap: usize) -> Result<Burst> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "burst directory not found"),
        ));
    }
    let shared_path = dir.join(BURST_SIDECAR);
    let shared = if shared_path.exists() {
        Some(read_sidecar(&shared_path)?)
    } else {
        None
    };
    let paths = frame_paths(dir)?;
    let mut frames = Vec::with_capacity(paths.len());
    for p in &paths {
        let own = p.with_extension("txt");
        let meta = if own.exists() {
            read_sidecar(&own)?
        } else {
            shared.clone().ok_or_else(|| {
                Error::io(
                    &shared_path,
                    std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        "no sidecar for burst frames",
                    ),
                )
            })?
        };
        frames.push(load_bayer_frame_with(p, &meta)?);
    }
    let noise = shared.as_ref().map(|s| s.noise).unwrap_or_else(|| {
        paths
            .first()
            .and_then(|p| read_sidecar(&p.with_extension("txt")).ok())
            .map(|s| s.noise)
            .unwrap_or_default()
    });
    let base = shared.as_ref().and_then(|s| s.base_index).unwrap_or(0);
    Burst::with_cap(frames, base, noise, cap)
}

/// Writes a burst as `frame_NNN.png` files plus `burst.txt`.
pub fn save_burst_dir(burst: &Burst, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in burst.frames().iter().enumerate() {
        save_bayer_frame(f, &dir.join(format!("frame_{i:03}.png")))?;
    }
    let mut meta = Sidecar::full_range(burst.noise());
    meta.base_index = Some(burst.base_index());
    let path = dir.join(BURST_SIDECAR);
    fs::write(&path, meta.to_text()).map_err(|e| Error::io(&path, e))
}

/// Reads any 8- or 16-bit image as linear RGB in [0, 1].
pub fn load_rgb_image(path: &Path) -> Result<RgbImage> {
    let img = open_image(path)?;
    let rgb = img.to_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    Ok(RgbImage::from_fn(w, h, |x, y| {
        let p = rgb.get_pixel(x as u32, y as u32);
        [p[0], p[1], p[2]]
    }))
}

pub fn save_rgb16_png(img: &RgbImage, path: &Path) -> Result<()> {
    let (w, h) = img.dims();
    let mut raw = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            raw.extend(img.get(x, y).map(to_u16));
        }
    }
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer matches dims");
    ensure_parent(path)?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a plane as an 8-bit grayscale PNG (values clamped to [0, 1]).
pub fn write_heatmap_png(plane: &Plane, path: &Path) -> Result<()> {
    let (w, h) = plane.dims();
    let raw: Vec<u8> = plane
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(w as u32, h as u32, raw).expect("buffer matches dims");
    ensure_parent(path)?;
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}
