//! Frame registration.
//!
//! Coarse-to-fine block matching on a luma pyramid produces one integer
//! translation per tile; a full-resolution pass picks the odd integer phase
//! and a few Lucas-Kanade iterations refine each tile to subpixel precision.
//! Vectors are stored in full-resolution Bayer pixels with the convention
//! `frame(p + v) ~= base(p)`.

use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::image::Plane;
use crate::raw::{decimate_luma, BayerFrame, Burst, LumaImage};

/// Full-resolution search radius around the doubled luma vector; covers
/// the odd phase plus one luma pixel of coarse-stage error.
const FULL_RES_RADIUS: i64 = 2;

/// Smallest short side allowed at the top of a multi-level pyramid.
pub const MIN_PYRAMID_SIDE: usize = 32;

/// Per-tile translation of one frame relative to the base frame.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentField {
    tile_size: usize,
    grid_w: usize,
    grid_h: usize,
    frame_index: usize,
    vectors: Vec<[f64; 2]>,
}

impl AlignmentField {
    /// All-zero field for a `width`x`height` frame.
    pub fn zeros(width: usize, height: usize, tile_size: usize, frame_index: usize) -> Self {
        Self::uniform(width, height, tile_size, frame_index, [0.0, 0.0])
    }

    pub fn uniform(
        width: usize,
        height: usize,
        tile_size: usize,
        frame_index: usize,
        v: [f64; 2],
    ) -> Self {
        assert!(tile_size > 0);
        let grid_w = width.div_ceil(tile_size).max(1);
        let grid_h = height.div_ceil(tile_size).max(1);
        Self {
            tile_size,
            grid_w,
            grid_h,
            frame_index,
            vectors: vec![v; grid_w * grid_h],
        }
    }

    pub fn from_vectors(
        grid_w: usize,
        grid_h: usize,
        tile_size: usize,
        frame_index: usize,
        vectors: Vec<[f64; 2]>,
    ) -> Result<Self> {
        if vectors.len() != grid_w * grid_h || tile_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "{} vectors do not fill a {grid_w}x{grid_h} tile grid",
                vectors.len()
            )));
        }
        Ok(Self {
            tile_size,
            grid_w,
            grid_h,
            frame_index,
            vectors,
        })
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_w, self.grid_h)
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn with_frame_index(mut self, frame_index: usize) -> Self {
        self.frame_index = frame_index;
        self
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.vectors
    }

    #[inline]
    pub fn get(&self, tx: usize, ty: usize) -> [f64; 2] {
        self.vectors[ty * self.grid_w + tx]
    }

    #[inline]
    pub fn set(&mut self, tx: usize, ty: usize, v: [f64; 2]) {
        self.vectors[ty * self.grid_w + tx] = v;
    }

    /// Tile containing full-resolution position `(x, y)`, clamped to the grid.
    #[inline]
    pub fn tile_of(&self, x: f64, y: f64) -> (usize, usize) {
        let ts = self.tile_size as f64;
        let tx = (x / ts).floor().clamp(0.0, (self.grid_w - 1) as f64) as usize;
        let ty = (y / ts).floor().clamp(0.0, (self.grid_h - 1) as f64) as usize;
        (tx, ty)
    }

    /// Vector of the tile containing `(x, y)`; no inter-tile interpolation.
    #[inline]
    pub fn vector_at(&self, x: f64, y: f64) -> [f64; 2] {
        let (tx, ty) = self.tile_of(x, y);
        self.get(tx, ty)
    }

    /// Full-resolution center of a tile.
    pub fn tile_center(&self, tx: usize, ty: usize) -> [f64; 2] {
        let ts = self.tile_size as f64;
        [(tx as f64 + 0.5) * ts, (ty as f64 + 0.5) * ts]
    }

    /// Motion extent over the 3x3 tile neighborhood:
    /// `hypot(max vx - min vx, max vy - min vy)`.
    pub fn motion_extent(&self, tx: usize, ty: usize) -> f64 {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for ny in ty.saturating_sub(1)..=(ty + 1).min(self.grid_h - 1) {
            for nx in tx.saturating_sub(1)..=(tx + 1).min(self.grid_w - 1) {
                let v = self.get(nx, ny);
                for a in 0..2 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
        }
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.vectors.iter().map(|v| v[0].hypot(v[1])).sum::<f64>() / self.vectors.len() as f64
    }

    /// Mean per-tile Euclidean distance to another field on the same grid.
    pub fn mean_error(&self, other: &AlignmentField) -> f64 {
        assert_eq!(self.grid_dims(), other.grid_dims());
        self.vectors
            .iter()
            .zip(&other.vectors)
            .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
            .sum::<f64>()
            / self.vectors.len() as f64
    }

    /// Writes `tile_x,tile_y,v_x,v_y` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["tile_x", "tile_y", "v_x", "v_y"])
            .map_err(csv_err)?;
        for ty in 0..self.grid_h {
            for tx in 0..self.grid_w {
                let v = self.get(tx, ty);
                w.write_record([
                    tx.to_string(),
                    ty.to_string(),
                    v[0].to_string(),
                    v[1].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a field written by [`AlignmentField::write_csv`]. The grid size
    /// is inferred from the largest tile indices.
    pub fn read_csv(path: &Path, tile_size: usize, frame_index: usize) -> Result<Self> {
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 4 {
                return Err(bad(format!("expected 4 columns, found {}", rec.len())));
            }
            let tx: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad tile_x `{}`", &rec[0])))?;
            let ty: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad tile_y `{}`", &rec[1])))?;
            let vx: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad v_x `{}`", &rec[2])))?;
            let vy: f64 = rec[3]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad v_y `{}`", &rec[3])))?;
            if !vx.is_finite() || !vy.is_finite() {
                return Err(bad("non-finite vector".into()));
            }
            rows.push((tx, ty, [vx, vy]));
        }
        if rows.is_empty() {
            return Err(bad("no tiles".into()));
        }
        let grid_w = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
        let grid_h = rows.iter().map(|r| r.1).max().unwrap_or(0) + 1;
        if rows.len() != grid_w * grid_h {
            return Err(bad(format!(
                "{} rows do not cover a {grid_w}x{grid_h} grid",
                rows.len()
            )));
        }
        let mut vectors = vec![[f64::NAN; 2]; grid_w * grid_h];
        for (tx, ty, v) in rows {
            vectors[ty * grid_w + tx] = v;
        }
        if vectors.iter().any(|v| v[0].is_nan()) {
            return Err(bad("duplicate tile rows".into()));
        }
        Self::from_vectors(grid_w, grid_h, tile_size, frame_index, vectors)
    }
}

/// Luma pyramid; level 0 is the finest.
#[derive(Clone, Debug)]
pub struct Pyramid {
    levels: Vec<Plane>,
}

impl Pyramid {
    pub fn levels(&self) -> &[Plane] {
        &self.levels
    }

    pub fn level(&self, k: usize) -> &Plane {
        &self.levels[k]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

/// Deepest pyramid whose top level keeps a short side of at least
/// [`MIN_PYRAMID_SIDE`] (always at least one level).
pub fn max_pyramid_levels(width: usize, height: usize) -> usize {
    let mut short = width.min(height);
    let mut levels = 1;
    while short / 2 >= MIN_PYRAMID_SIDE {
        short /= 2;
        levels += 1;
    }
    levels
}

fn downsample2(p: &Plane) -> Plane {
    let (w, h) = (p.width() / 2, p.height() / 2);
    Plane::from_fn(w, h, |x, y| {
        let s = p.get(2 * x, 2 * y) as f64
            + p.get(2 * x + 1, 2 * y) as f64
            + p.get(2 * x, 2 * y + 1) as f64
            + p.get(2 * x + 1, 2 * y + 1) as f64;
        (s * 0.25) as f32
    })
}

pub fn build_pyramid(luma: &LumaImage, levels: usize) -> Result<Pyramid> {
    let (w, h) = luma.dims();
    let max = max_pyramid_levels(w, h);
    if levels == 0 || levels > max {
        return Err(Error::TooManyLevels {
            levels,
            width: w,
            height: h,
            max,
        });
    }
    let mut out = vec![luma.plane().clone()];
    for _ in 1..levels {
        let next = downsample2(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(Pyramid { levels: out })
}

/// Registration settings.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignConfig {
    /// Tile size in full-resolution pixels (even).
    pub tile_size: usize,
    /// Requested pyramid depth; clamped to what the image supports.
    pub pyramid_levels: usize,
    /// Block-matching search radius per level, in that level's pixels.
    pub search_radius: i32,
    /// Lucas-Kanade iterations after block matching.
    pub lk_iterations: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            pyramid_levels: 4,
            search_radius: 4,
            lk_iterations: 3,
        }
    }
}

impl AlignConfig {
    pub fn with_tile_size(mut self, tile_size: usize) -> Self {
        self.tile_size = tile_size;
        self
    }

    /// Largest displacement block matching can reach, in full-res pixels.
    pub fn search_budget(&self) -> f64 {
        let levels = self.pyramid_levels.max(1) as u32;
        // luma radius summed over levels, doubled to full-res, plus the
        // full-res search and the refinement clamp
        2.0 * self.search_radius as f64 * ((1u64 << levels) - 1) as f64
            + FULL_RES_RADIUS as f64
            + 2.0 * self.lk_iterations as f64
    }
}

/// Mean squared difference between a base tile and the frame displaced by
/// an integer vector. Only pixels whose displaced position is inside the
/// frame count; tiles with less than a quarter coverage cost infinity.
fn tile_cost(base: &Plane, frame: &Plane, x0: usize, y0: usize, ts: usize, v: (i64, i64)) -> f64 {
    let (w, h) = base.dims();
    let x1 = (x0 + ts).min(w);
    let y1 = (y0 + ts).min(h);
    let area = (x1 - x0) * (y1 - y0);
    let (mut sse, mut n) = (0.0f64, 0usize);
    for y in y0..y1 {
        let fy = y as i64 + v.1;
        if fy < 0 || fy >= h as i64 {
            continue;
        }
        for x in x0..x1 {
            let fx = x as i64 + v.0;
            if fx < 0 || fx >= w as i64 {
                continue;
            }
            let d = frame.get(fx as usize, fy as usize) as f64 - base.get(x, y) as f64;
            sse += d * d;
            n += 1;
        }
    }
    if n == 0 || n * 4 < area {
        f64::INFINITY
    } else {
        sse / n as f64
    }
}

/// Exhaustive search of `guess +- radius`. Ties keep the candidate closest
/// to the guess, then the first in scan order.
fn best_integer_vector(
    base: &Plane,
    frame: &Plane,
    x0: usize,
    y0: usize,
    ts: usize,
    guess: (i64, i64),
    radius: i64,
) -> (i64, i64) {
    let mut best = guess;
    let mut best_key = (tile_cost(base, frame, x0, y0, ts, guess), 0i64);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let v = (guess.0 + dx, guess.1 + dy);
            let key = (tile_cost(base, frame, x0, y0, ts, v), dx * dx + dy * dy);
            if key.0 < best_key.0 || (key.0 == best_key.0 && key.1 < best_key.1) {
                best = v;
                best_key = key;
            }
        }
    }
    best
}

/// Per-position mean of the 2x2 Bayer quad starting at each pixel; every
/// window holds one sample of each CFA site, so the image is usable for
/// matching at full resolution.
pub fn quad_mean_image(frame: &BayerFrame) -> Plane {
    let p = frame.data();
    let (w, h) = p.dims();
    Plane::from_fn(w, h, |x, y| {
        let (x, y) = (x as isize, y as isize);
        0.25 * (p.get_clamped(x, y)
            + p.get_clamped(x + 1, y)
            + p.get_clamped(x, y + 1)
            + p.get_clamped(x + 1, y + 1))
    })
}

/// Integer block matching for one frame on precomputed pyramids, followed by
/// a +-2 px full-resolution search. Returns full-res integer vectors.
fn block_match(
    base_pyr: &Pyramid,
    frame_pyr: &Pyramid,
    base_full: &Plane,
    frame_full: &Plane,
    cfg: &AlignConfig,
    frame_index: usize,
) -> AlignmentField {
    let ts = (cfg.tile_size / 2).max(1);
    let radius = cfg.search_radius.max(0) as i64;
    let levels = base_pyr.len();
    // vectors of the current level, on that level's own tile grid
    let mut prev: Option<LevelVectors> = None;
    for k in (0..levels).rev() {
        let (b, f) = (base_pyr.level(k), frame_pyr.level(k));
        let (w, h) = b.dims();
        let (gw, gh) = (w.div_ceil(ts).max(1), h.div_ceil(ts).max(1));
        let vecs: Vec<(i64, i64)> = (0..gw * gh)
            .into_par_iter()
            .map(|i| {
                let (tx, ty) = (i % gw, i / gw);
                let guess = match &prev {
                    None => (0, 0),
                    Some((pw, ph, pv)) => {
                        let px = ((tx * 2 + 1) / 4).min(pw - 1);
                        let py = ((ty * 2 + 1) / 4).min(ph - 1);
                        let v = pv[py * pw + px];
                        (2 * v.0, 2 * v.1)
                    }
                };
                best_integer_vector(b, f, tx * ts, ty * ts, ts, guess, radius)
            })
            .collect();
        prev = Some((gw, gh, vecs));
    }
    let (gw, gh, vecs) = prev.expect("at least one level");
    let full_ts = cfg.tile_size.max(1);
    let vectors: Vec<[f64; 2]> = (0..gw * gh)
        .into_par_iter()
        .map(|i| {
            let (tx, ty) = (i % gw, i / gw);
            let v = vecs[i];
            let v = best_integer_vector(
                base_full,
                frame_full,
                tx * full_ts,
                ty * full_ts,
                full_ts,
                (2 * v.0, 2 * v.1),
                FULL_RES_RADIUS,
            );
            [v.0 as f64, v.1 as f64]
        })
        .collect();
    let (w, h) = base_full.dims();
    let field = AlignmentField::zeros(w, h, full_ts, frame_index);
    debug_assert_eq!(field.grid_dims(), (gw, gh));
    AlignmentField { vectors, ..field }
}

/// Mean squared residual of a luma tile displaced by a continuous vector
/// (luma pixels), over positions whose bilinear footprint is in bounds.
fn lk_residual(base: &Plane, frame: &Plane, x0: usize, y0: usize, ts: usize, u: [f64; 2]) -> f64 {
    let (w, h) = base.dims();
    let (mut sse, mut n) = (0.0f64, 0usize);
    for y in y0..(y0 + ts).min(h) {
        let fy = y as f64 + u[1];
        if fy < 0.0 || fy > (h - 1) as f64 {
            continue;
        }
        for x in x0..(x0 + ts).min(w) {
            let fx = x as f64 + u[0];
            if fx < 0.0 || fx > (w - 1) as f64 {
                continue;
            }
            let r = frame.sample_bilinear(fx, fy) - base.get(x, y) as f64;
            sse += r * r;
            n += 1;
        }
    }
    if n == 0 {
        f64::INFINITY
    } else {
        sse / n as f64
    }
}

/// Grid width, grid height and integer vectors of one pyramid level.
type LevelVectors = (usize, usize, Vec<(i64, i64)>);

/// Translation-only forward-additive Lucas-Kanade on one luma tile.
/// Returns the refined vector in luma pixels.
/// `tile` is `(x0, y0, size)`.
fn lk_tile(
    base: &Plane,
    frame: &Plane,
    tile: (usize, usize, usize),
    mut u: [f64; 2],
    iters: usize,
    max_step: f64,
) -> [f64; 2] {
    let (w, h) = base.dims();
    let (x0, y0, ts) = tile;
    let mut err = lk_residual(base, frame, x0, y0, ts, u);
    for _ in 0..iters {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for y in y0..(y0 + ts).min(h) {
            let fy = y as f64 + u[1];
            if fy < 1.0 || fy > (h - 2) as f64 {
                continue;
            }
            for x in x0..(x0 + ts).min(w) {
                let fx = x as f64 + u[0];
                if fx < 1.0 || fx > (w - 2) as f64 {
                    continue;
                }
                let gx = 0.5
                    * (frame.sample_bilinear(fx + 1.0, fy) - frame.sample_bilinear(fx - 1.0, fy));
                let gy = 0.5
                    * (frame.sample_bilinear(fx, fy + 1.0) - frame.sample_bilinear(fx, fy - 1.0));
                let r = frame.sample_bilinear(fx, fy) - base.get(x, y) as f64;
                a11 += gx * gx;
                a12 += gx * gy;
                a22 += gy * gy;
                b1 += gx * r;
                b2 += gy * r;
            }
        }
        let det = a11 * a22 - a12 * a12;
        let tr = a11 + a22;
        if tr <= 1e-12 || det <= 1e-9 * tr * tr {
            break;
        }
        let dx = (-(a22 * b1 - a12 * b2) / det).clamp(-max_step, max_step);
        let dy = (-(a11 * b2 - a12 * b1) / det).clamp(-max_step, max_step);
        let cand = [u[0] + dx, u[1] + dy];
        let cand_err = lk_residual(base, frame, x0, y0, ts, cand);
        // also stops on a NaN residual
        if cand_err.partial_cmp(&err) != Some(std::cmp::Ordering::Less) {
            break;
        }
        u = cand;
        err = cand_err;
        if dx.hypot(dy) * (2.0 / max_step) < 1e-3 {
            break;
        }
    }
    u
}

/// Refines every tile vector with Lucas-Kanade on half-resolution luma.
/// Flat tiles (singular normal equations) keep their vector; a step is only
/// taken when it lowers the tile residual.
pub fn refine_lucas_kanade(
    base_luma: &LumaImage,
    frame_luma: &LumaImage,
    field: &AlignmentField,
    iters: usize,
) -> AlignmentField {
    let (b, f) = (base_luma.plane(), frame_luma.plane());
    let ts = (field.tile_size / 2).max(1);
    let (gw, _) = field.grid_dims();
    let vectors = field
        .vectors
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let (tx, ty) = (i % gw, i / gw);
            let u = lk_tile(
                b,
                f,
                (tx * ts, ty * ts, ts),
                [v[0] * 0.5, v[1] * 0.5],
                iters,
                1.0,
            );
            [u[0] * 2.0, u[1] * 2.0]
        })
        .collect();
    AlignmentField {
        vectors,
        ..field.clone()
    }
}

/// Lucas-Kanade refinement on a full-resolution guide such as
/// [`tent_mosaic_image`]; steps are clamped to +-2 px.
pub fn refine_lucas_kanade_full(
    base: &Plane,
    frame: &Plane,
    field: &AlignmentField,
    iters: usize,
) -> AlignmentField {
    let ts = field.tile_size.max(1);
    let (gw, _) = field.grid_dims();
    let vectors = field
        .vectors
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            lk_tile(
                base,
                frame,
                ((i % gw) * ts, (i / gw) * ts, ts),
                *v,
                iters,
                2.0,
            )
        })
        .collect();
    AlignmentField {
        vectors,
        ..field.clone()
    }
}

/// Mosaic filtered with the separable `[1 2 1] / 4` tent. Every CFA phase
/// receives the same channel weights (R/4, G/2, B/4), so the result is a
/// full-resolution luminance that barely depends on Bayer phase.
pub fn tent_mosaic_image(frame: &BayerFrame) -> Plane {
    let p = frame.data();
    let (w, h) = p.dims();
    let tap = |i: isize, n: usize| -> isize {
        // mirror without repeating the edge sample keeps CFA parity
        if i < 0 {
            -i
        } else if i >= n as isize {
            2 * (n as isize - 1) - i
        } else {
            i
        }
    };
    let horiz = Plane::from_fn(w, h, |x, y| {
        let x = x as isize;
        0.25 * p.get(tap(x - 1, w) as usize, y)
            + 0.5 * p.get(x as usize, y)
            + 0.25 * p.get(tap(x + 1, w) as usize, y)
    });
    Plane::from_fn(w, h, |x, y| {
        let y = y as isize;
        0.25 * horiz.get(x, tap(y - 1, h) as usize)
            + 0.5 * horiz.get(x, y as usize)
            + 0.25 * horiz.get(x, tap(y + 1, h) as usize)
    })
}

/// Precomputed per-frame data used by registration.
pub struct AlignInputs {
    pub luma: LumaImage,
    pyramid: Pyramid,
    full: Plane,
}

impl AlignInputs {
    pub fn new(frame: &BayerFrame, cfg: &AlignConfig) -> Self {
        let luma = decimate_luma(frame);
        let (w, h) = luma.dims();
        let levels = cfg.pyramid_levels.clamp(1, max_pyramid_levels(w, h));
        let pyramid = build_pyramid(&luma, levels).expect("depth clamped to supported range");
        Self {
            luma,
            pyramid,
            full: tent_mosaic_image(frame),
        }
    }
}

/// Block matching only (integer vectors), useful for inspecting the coarse
/// stage in isolation.
pub fn align_frame_integer(
    base: &AlignInputs,
    frame: &AlignInputs,
    cfg: &AlignConfig,
    frame_index: usize,
) -> AlignmentField {
    block_match(
        &base.pyramid,
        &frame.pyramid,
        &base.full,
        &frame.full,
        cfg,
        frame_index,
    )
}

/// Block matching plus Lucas-Kanade refinement for one frame.
pub fn align_frame(
    base: &AlignInputs,
    frame: &AlignInputs,
    cfg: &AlignConfig,
    frame_index: usize,
) -> AlignmentField {
    let coarse = align_frame_integer(base, frame, cfg, frame_index);
    refine_lucas_kanade_full(&base.full, &frame.full, &coarse, cfg.lk_iterations)
}

/// Aligns every frame of the burst to its base frame. The returned list has
/// one field per frame in burst order; the base frame's field is all zero.
pub fn align_burst(burst: &Burst, cfg: &AlignConfig) -> Vec<AlignmentField> {
    let (w, h) = burst.dims();
    let base_idx = burst.base_index();
    let base = AlignInputs::new(burst.base(), cfg);
    burst
        .frames()
        .iter()
        .enumerate()
        .map(|(i, frame)| {
            if i == base_idx {
                AlignmentField::zeros(w, h, cfg.tile_size, i)
            } else {
                align_frame(&base, &AlignInputs::new(frame, cfg), cfg, i)
            }
        })
        .collect()
}

/// Normalized 2D histogram of fractional vector parts.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetHistogram {
    pub bins: usize,
    /// Raw counts, row-major `[y_bin][x_bin]`.
    pub counts: Vec<u64>,
    /// Frequencies summing to 1.
    pub freq: Vec<f64>,
}

impl OffsetHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn freq_at(&self, bx: usize, by: usize) -> f64 {
        self.freq[by * self.bins + bx]
    }

    /// Counts per bin of the x (axis 0) or y (axis 1) fraction.
    pub fn marginal(&self, axis: usize) -> Vec<u64> {
        let mut m = vec![0u64; self.bins];
        for by in 0..self.bins {
            for bx in 0..self.bins {
                m[if axis == 0 { bx } else { by }] += self.counts[by * self.bins + bx];
            }
        }
        m
    }

    /// Number of non-empty bins of an axis marginal.
    pub fn occupied_bins(&self, axis: usize) -> usize {
        self.marginal(axis).iter().filter(|&&c| c > 0).count()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["bin_x", "bin_y", "frac_x_lo", "frac_y_lo", "count", "freq"])
            .map_err(csv_err)?;
        let step = 1.0 / self.bins as f64;
        for by in 0..self.bins {
            for bx in 0..self.bins {
                let i = by * self.bins + bx;
                w.write_record([
                    bx.to_string(),
                    by.to_string(),
                    format!("{:.6}", bx as f64 * step),
                    format!("{:.6}", by as f64 * step),
                    self.counts[i].to_string(),
                    format!("{:.8}", self.freq[i]),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Fractional part in `[0, 1)`; values within 1e-9 of an integer snap to 0
/// so whole-pixel vectors are not split by float noise.
fn fraction(v: f64) -> f64 {
    let f = v - v.floor();
    if f < 1e-9 || 1.0 - f < 1e-9 {
        0.0
    } else {
        f
    }
}

/// Histogram of the fractional parts of all tile vectors of all fields.
pub fn subpixel_offset_histogram(fields: &[AlignmentField], bins: usize) -> OffsetHistogram {
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins * bins];
    for field in fields {
        for v in field.vectors() {
            let bx = ((fraction(v[0]) * bins as f64) as usize).min(bins - 1);
            let by = ((fraction(v[1]) * bins as f64) as usize).min(bins - 1);
            counts[by * bins + bx] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let freq = counts
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                c as f64 / total as f64
            }
        })
        .collect();
    OffsetHistogram { bins, counts, freq }
}

/// Pearson chi-square goodness-of-fit against the uniform distribution.
/// Returns `(statistic, p_value)`.
pub fn chi_square_uniformity(counts: &[u64]) -> (f64, f64) {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if k < 2 || total == 0 {
        return (0.0, 1.0);
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::RgbImage;
    use crate::noise::NoiseParams;
    use crate::raw::mosaic_rggb;
    use approx::assert_abs_diff_eq;

    fn textured(w: usize, h: usize, sx: f64, sy: f64) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - sx, y as f64 - sy);
            let v = 0.5 + 0.2 * (0.21 * x + 0.05 * y).sin() + 0.15 * (0.07 * x - 0.17 * y).cos();
            let v = v as f32;
            [v, 0.9 * v + 0.05, 0.8 * v + 0.1]
        })
    }

    fn frame(img: &RgbImage) -> BayerFrame {
        BayerFrame::from_plane(mosaic_rggb(img)).unwrap()
    }

    #[test]
    fn pyramid_sizes_and_mean() {
        let luma = LumaImage(Plane::from_fn(256, 256, |x, y| {
            ((x * 7 + y * 3) % 17) as f32 / 17.0
        }));
        let p = build_pyramid(&luma, 4).unwrap();
        let sizes: Vec<_> = p.levels().iter().map(|l| l.width()).collect();
        assert_eq!(sizes, vec![256, 128, 64, 32]);
        for l in p.levels() {
            assert_abs_diff_eq!(l.mean(), luma.plane().mean(), epsilon = 1e-6);
        }
        assert!(matches!(
            build_pyramid(&luma, 5),
            Err(Error::TooManyLevels { .. })
        ));
        let c = LumaImage(Plane::filled(64, 64, 0.3));
        assert!(build_pyramid(&c, 2)
            .unwrap()
            .levels()
            .iter()
            .all(|l| l.data().iter().all(|&v| v == 0.3)));
    }

    #[test]
    fn identical_frames_align_to_zero() {
        let f = frame(&textured(96, 96, 0.0, 0.0));
        let burst = Burst::new(vec![f.clone(), f], 0, NoiseParams::default()).unwrap();
        let fields = align_burst(&burst, &AlignConfig::default());
        assert!(fields.iter().all(|fl| fl
            .vectors()
            .iter()
            .all(|v| v[0].abs() < 1e-3 && v[1].abs() < 1e-3)));
    }

    #[test]
    fn integer_offset_found_by_block_matching() {
        let base = frame(&textured(128, 128, 0.0, 0.0));
        let moved = frame(&textured(128, 128, 3.0, -2.0));
        let cfg = AlignConfig::default();
        let field = align_frame_integer(
            &AlignInputs::new(&base, &cfg),
            &AlignInputs::new(&moved, &cfg),
            &cfg,
            1,
        );
        let (gw, gh) = field.grid_dims();
        assert_eq!((gw, gh), (8, 8));
        for ty in 1..gh - 1 {
            for tx in 1..gw - 1 {
                assert_eq!(field.get(tx, ty), [3.0, -2.0], "tile {tx},{ty}");
            }
        }
    }

    #[test]
    fn flat_tile_keeps_vector() {
        let flat = LumaImage(Plane::filled(32, 32, 0.5));
        let field = AlignmentField::uniform(64, 64, 16, 1, [0.75, -0.5]);
        assert_eq!(refine_lucas_kanade(&flat, &flat, &field, 3), field);
    }

    #[test]
    fn exact_alignment_is_stable() {
        let luma = decimate_luma(&frame(&textured(64, 64, 0.0, 0.0)));
        let field = AlignmentField::zeros(64, 64, 16, 1);
        let refined = refine_lucas_kanade(&luma, &luma, &field, 3);
        assert!(refined
            .vectors()
            .iter()
            .all(|v| v[0].abs() < 1e-3 && v[1].abs() < 1e-3));
    }

    #[test]
    fn histogram_of_integer_vectors() {
        let f = AlignmentField::uniform(64, 64, 16, 1, [2.0, -3.0]);
        let h = subpixel_offset_histogram(&[f], 10);
        assert_eq!(h.freq_at(0, 0), 1.0);
        assert_abs_diff_eq!(h.freq.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lattice_motion_histogram() {
        let fields: Vec<_> = (0..16)
            .map(|k| AlignmentField::uniform(32, 32, 16, k, [0.5 * k as f64, 0.25 * k as f64]))
            .collect();
        let h = subpixel_offset_histogram(&fields, 4);
        // y fraction k/4 fixes the x fraction (k/2) for every frame
        for by in 0..4 {
            for bx in 0..4 {
                let expect = if bx == 2 * (by % 2) { 0.25 } else { 0.0 };
                assert_abs_diff_eq!(h.freq_at(bx, by), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn chi_square_matches_known_values() {
        let (s, p) = chi_square_uniformity(&[10, 10, 10, 10]);
        assert_eq!(s, 0.0);
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
        // statistic 11.3449 is the 0.01 critical value for 3 dof
        let (_, p) = chi_square_uniformity(&[0, 0, 0, 100]);
        assert!(p < 1e-10);
    }

    #[test]
    fn field_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = AlignmentField::zeros(40, 24, 16, 2);
        f.set(2, 1, [1.25, -0.5]);
        let path = dir.path().join("f.csv");
        f.write_csv(&path).unwrap();
        assert_eq!(AlignmentField::read_csv(&path, 16, 2).unwrap(), f);
    }

    #[test]
    fn motion_extent_examples() {
        let mut f = AlignmentField::zeros(48, 48, 16, 1);
        assert_eq!(f.motion_extent(1, 1), 0.0);
        f.set(0, 0, [3.0, 4.0]);
        assert_eq!(f.motion_extent(1, 1), 5.0);
        assert_eq!(f.motion_extent(2, 2), 0.0);
    }
}
