//! Desk-scale experiments: synthetic-dataset quality, alignment-corruption
//! sweeps, frame-count sweeps and throughput scaling.
//!
//! Every experiment produces a [`BenchReport`] whose CSV schema is
//!
//! ```text
//! # border_crop_px=8
//! dataset,image_id,config_id,psnr_db,ssim,sharpness,wall_ms
//! ```
//!
//! Rows are sorted by `(dataset, image_id, config_id)` so reports are
//! reproducible regardless of scheduling. `wall_ms` is the only column that
//! varies between runs.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::align::AlignmentField;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::io::load_rgb_image;
use crate::merge::{merge_burst, merge_burst_with_alignment, AlignmentMode, MergeConfig};
use crate::metrics::{psnr, sharpness, ssim, PSNR_CAP_DB};
use crate::raw::Burst;
use crate::synth::{
    apply_corruption, generate_burst_offsets, oracle_fields, synthesize_burst, BlobScene,
    CorruptionSpec, OffsetList,
};

/// Border excluded from every metric.
pub const DEFAULT_BORDER_CROP: usize = 8;
pub const DEFAULT_BURST_FRAMES: usize = 15;
pub const DEFAULT_OFFSET_SIGMA: f64 = 2.0;
pub const DEFAULT_BENCH_SEED: u64 = 2019;

pub const CONFIG_ORACLE: &str = "oracle";
pub const CONFIG_AUTO: &str = "auto";
pub const CONFIG_SINGLE: &str = "single";

const CSV_HEADER: [&str; 7] = [
    "dataset",
    "image_id",
    "config_id",
    "psnr_db",
    "ssim",
    "sharpness",
    "wall_ms",
];

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub image_id: String,
    pub config_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub sharpness: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub border_crop: usize,
}

impl BenchReport {
    pub fn new(mut rows: Vec<BenchRow>, border_crop: usize) -> Self {
        rows.sort_by(|a, b| {
            (&a.dataset, &a.image_id, &a.config_id).cmp(&(&b.dataset, &b.image_id, &b.config_id))
        });
        Self { rows, border_crop }
    }

    pub fn config_ids(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.config_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn image_ids(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.image_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn rows_for<'a>(&'a self, config_id: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows.iter().filter(move |r| r.config_id == config_id)
    }

    pub fn get(&self, image_id: &str, config_id: &str) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.image_id == image_id && r.config_id == config_id)
    }

    /// Dataset mean of PSNR and SSIM for one configuration.
    pub fn mean(&self, config_id: &str) -> Option<(f64, f64)> {
        let rows: Vec<_> = self.rows_for(config_id).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|r| r.psnr_db).sum::<f64>() / n,
            rows.iter().map(|r| r.ssim).sum::<f64>() / n,
        ))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = format!("# border_crop_px={}\n", self.border_crop);
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.dataset.clone(),
                r.image_id.clone(),
                r.config_id.clone(),
                format!("{:.4}", r.psnr_db),
                format!("{:.6}", r.ssim),
                format!("{:.6e}", r.sharpness),
                format!("{:.1}", r.wall_ms),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        text.push_str(&String::from_utf8_lossy(&bytes));
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let border_crop = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix("# border_crop_px="))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("missing border_crop_px header".into()))?;
        let body: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| bad(format!("bad numeric field {i}")))
            };
            rows.push(BenchRow {
                dataset: rec.get(0).unwrap_or_default().to_string(),
                image_id: rec.get(1).unwrap_or_default().to_string(),
                config_id: rec.get(2).unwrap_or_default().to_string(),
                psnr_db: num(3)?,
                ssim: num(4)?,
                sharpness: num(5)?,
                wall_ms: num(6)?,
            });
        }
        Ok(Self::new(rows, border_crop))
    }
}

/// Ground-truth images of one dataset, sorted by file name.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub images: Vec<(String, RgbImage)>,
}

/// Loads every readable image in `dir`. Unreadable files are skipped with a
/// warning. `crop` takes an even-sized center crop of at most that size;
/// odd dimensions are trimmed to even either way.
pub fn load_dataset(dir: &Path, crop: Option<usize>) -> Result<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for p in paths {
        match load_rgb_image(&p) {
            Ok(img) => {
                let (w, h) = img.dims();
                let img = match crop {
                    Some(c) => img.center_crop(c),
                    None => img.crop(0, 0, w & !1, h & !1),
                };
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                images.push((id, img));
            }
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().trim_end_matches('/').to_string())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset { name, images })
}

/// Shared experiment settings.
#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub frames: usize,
    pub sigma: f64,
    pub seed: u64,
    pub border_crop: usize,
    pub merge: MergeConfig,
    /// Which merges [`run_synthetic_bench`] performs.
    pub oracle: bool,
    pub auto: bool,
    pub single: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            frames: DEFAULT_BURST_FRAMES,
            sigma: DEFAULT_OFFSET_SIGMA,
            seed: DEFAULT_BENCH_SEED,
            border_crop: DEFAULT_BORDER_CROP,
            merge: MergeConfig::default(),
            oracle: true,
            auto: true,
            single: true,
        }
    }
}

/// Seed for the `index`-th image of a dataset.
pub fn image_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// A synthesized burst together with its ground truth.
pub struct SyntheticCase {
    pub truth: RgbImage,
    pub offsets: OffsetList,
    pub burst: Burst,
}

impl SyntheticCase {
    pub fn new(truth: &RgbImage, frames: usize, sigma: f64, seed: u64) -> Result<Self> {
        let offsets = generate_burst_offsets(frames, sigma, seed);
        let burst = synthesize_burst(truth, &offsets)?;
        Ok(Self {
            truth: truth.clone(),
            offsets,
            burst,
        })
    }

    pub fn oracle_fields(&self, tile_size: usize) -> Vec<AlignmentField> {
        let (w, h) = self.truth.dims();
        oracle_fields(&self.offsets, w, h, tile_size)
    }
}

/// Tile size the pipeline will pick for `burst` under `cfg`.
pub fn pipeline_tile_size(burst: &Burst, cfg: &MergeConfig) -> usize {
    let snr = crate::noise::estimate_snr(burst.base(), burst.noise());
    cfg.tuning
        .apply(crate::noise::tuning_for_snr(snr))
        .tile_size
}

/// Merges with oracle alignment (`fields = None` builds them from offsets).
pub fn merge_oracle(
    case: &SyntheticCase,
    burst: &Burst,
    cfg: &MergeConfig,
    fields: Option<Vec<AlignmentField>>,
) -> Result<RgbImage> {
    let fields = match fields {
        Some(f) => f,
        None => case.oracle_fields(pipeline_tile_size(burst, cfg)),
    };
    let n = burst.len();
    let cfg = MergeConfig {
        alignment: AlignmentMode::Oracle,
        ..cfg.clone()
    };
    Ok(merge_burst_with_alignment(burst, &cfg, Some(&fields[..n]))?.image)
}

/// PSNR/SSIM/sharpness of `img` against `reference` after the border crop.
pub fn score(img: &RgbImage, reference: &RgbImage, border: usize) -> Result<(f64, f64, f64)> {
    let a = img.crop_border(border);
    let b = reference.crop_border(border);
    Ok((psnr(&a, &b)?, ssim(&a, &b)?, sharpness(&a)))
}

fn row(
    ds: &str,
    id: &str,
    config: &str,
    img: &RgbImage,
    reference: &RgbImage,
    border: usize,
    ms: f64,
) -> Result<BenchRow> {
    let (p, s, sh) = score(img, reference, border)?;
    Ok(BenchRow {
        dataset: ds.to_string(),
        image_id: id.to_string(),
        config_id: config.to_string(),
        psnr_db: p,
        ssim: s,
        sharpness: sh,
        wall_ms: ms,
    })
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t0 = Instant::now();
    let v = f()?;
    Ok((v, t0.elapsed().as_secs_f64() * 1e3))
}

fn per_image<F>(ds: &Dataset, f: F) -> Result<Vec<BenchRow>>
where
    F: Fn(usize, &str, &RgbImage) -> Result<Vec<BenchRow>> + Sync,
{
    let chunks: Result<Vec<Vec<BenchRow>>> = ds
        .images
        .par_iter()
        .enumerate()
        .map(|(i, (id, img))| f(i, id, img))
        .collect();
    Ok(chunks?.into_iter().flatten().collect())
}

/// Per image: synthesize a burst, merge with oracle and/or automatic
/// alignment and as a single frame, and score each against the truth.
pub fn run_synthetic_bench(ds: &Dataset, cfg: &BenchConfig) -> Result<BenchReport> {
    let rows = per_image(ds, |i, id, truth| {
        let case = SyntheticCase::new(truth, cfg.frames, cfg.sigma, image_seed(cfg.seed, i))?;
        let mut rows = Vec::new();
        if cfg.oracle {
            let (img, ms) = timed(|| merge_oracle(&case, &case.burst, &cfg.merge, None))?;
            rows.push(row(
                &ds.name,
                id,
                CONFIG_ORACLE,
                &img,
                truth,
                cfg.border_crop,
                ms,
            )?);
        }
        if cfg.auto {
            let mc = MergeConfig {
                alignment: AlignmentMode::Auto,
                ..cfg.merge.clone()
            };
            let (out, ms) = timed(|| merge_burst(&case.burst, &mc))?;
            rows.push(row(
                &ds.name,
                id,
                CONFIG_AUTO,
                &out.image,
                truth,
                cfg.border_crop,
                ms,
            )?);
        }
        if cfg.single {
            let one = case.burst.prefix(1)?;
            let (img, ms) = timed(|| merge_oracle(&case, &one, &cfg.merge, None))?;
            rows.push(row(
                &ds.name,
                id,
                CONFIG_SINGLE,
                &img,
                truth,
                cfg.border_crop,
                ms,
            )?);
        }
        log::info!("{}: {id} done", ds.name);
        Ok(rows)
    })?;
    Ok(BenchReport::new(rows, cfg.border_crop))
}

/// Config id of a corruption level, e.g. `tile_replace_p0.30`.
pub fn corruption_config_id(spec: &CorruptionSpec) -> String {
    match spec.mode {
        crate::synth::CorruptionMode::TileReplace => format!("tile_replace_p{:.2}", spec.p),
        crate::synth::CorruptionMode::VectorNoise => format!("vector_noise_s{:.2}", spec.sigma),
    }
}

/// Default sweep levels: p in {0, 0.1, ..., 0.5} and
/// sigma in {0, 0.05, ..., 0.25}.
pub fn default_corruption_specs(seed: u64) -> Vec<CorruptionSpec> {
    let mut v: Vec<_> = (0..=5)
        .map(|k| CorruptionSpec::tile_replace(k as f64 / 10.0, seed))
        .collect();
    v.extend((0..=5).map(|k| CorruptionSpec::vector_noise(k as f64 * 0.05, seed)));
    v
}

/// Per image and spec: oracle alignment, corrupt every non-base field, merge.
/// A `single` row (base frame only) is added as the no-fusion reference.
pub fn run_corruption_bench(
    ds: &Dataset,
    specs: &[CorruptionSpec],
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    let rows = per_image(ds, |i, id, truth| {
        let case = SyntheticCase::new(truth, cfg.frames, cfg.sigma, image_seed(cfg.seed, i))?;
        let clean = case.oracle_fields(pipeline_tile_size(&case.burst, &cfg.merge));
        let base = case.burst.base_index();
        let mut rows = Vec::new();
        for spec in specs {
            let fields: Vec<_> = clean
                .iter()
                .enumerate()
                .map(|(f, field)| {
                    if f == base {
                        field.clone()
                    } else {
                        apply_corruption(field, &spec.for_frame(f))
                    }
                })
                .collect();
            let (img, ms) = timed(|| merge_oracle(&case, &case.burst, &cfg.merge, Some(fields)))?;
            rows.push(row(
                &ds.name,
                id,
                &corruption_config_id(spec),
                &img,
                truth,
                cfg.border_crop,
                ms,
            )?);
        }
        let one = case.burst.prefix(1)?;
        let (img, ms) = timed(|| merge_oracle(&case, &one, &cfg.merge, None))?;
        rows.push(row(
            &ds.name,
            id,
            CONFIG_SINGLE,
            &img,
            truth,
            cfg.border_crop,
            ms,
        )?);
        Ok(rows)
    })?;
    Ok(BenchReport::new(rows, cfg.border_crop))
}

pub fn frames_config_id(n: usize, against: &str) -> String {
    format!("n{n:02}_vs_{against}")
}

/// Alignment used by [`run_frames_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAlignment {
    Oracle,
    Auto,
}

/// Merges burst prefixes of each length in `ns` and scores them against the
/// full-burst merge (`nXX_vs_ref`) and against the truth (`nXX_vs_truth`).
pub fn run_frames_sweep(
    ds: &Dataset,
    ns: &[usize],
    alignment: SweepAlignment,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    if let Some(&n) = ns.iter().find(|&&n| n == 0 || n > cfg.frames) {
        return Err(Error::InvalidArgument(format!(
            "frame count {n} outside 1..={}",
            cfg.frames
        )));
    }
    let rows = per_image(ds, |i, id, truth| {
        let case = SyntheticCase::new(truth, cfg.frames, cfg.sigma, image_seed(cfg.seed, i))?;
        let merge_n = |n: usize| -> Result<RgbImage> {
            let b = case.burst.prefix(n)?;
            match alignment {
                SweepAlignment::Oracle => merge_oracle(&case, &b, &cfg.merge, None),
                SweepAlignment::Auto => Ok(merge_burst(
                    &b,
                    &MergeConfig {
                        alignment: AlignmentMode::Auto,
                        ..cfg.merge.clone()
                    },
                )?
                .image),
            }
        };
        let reference = merge_n(cfg.frames)?;
        let mut rows = Vec::new();
        for &n in ns {
            let (img, ms) = timed(|| merge_n(n))?;
            rows.push(row(
                &ds.name,
                id,
                &frames_config_id(n, "ref"),
                &img,
                &reference,
                cfg.border_crop,
                ms,
            )?);
            rows.push(row(
                &ds.name,
                id,
                &frames_config_id(n, "truth"),
                &img,
                truth,
                cfg.border_crop,
                ms,
            )?);
        }
        Ok(rows)
    })?;
    Ok(BenchReport::new(rows, cfg.border_crop))
}

/// One throughput measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingPoint {
    pub megapixels: f64,
    pub frames: usize,
    /// Minimum over repeats of total merge time divided by frame count.
    pub ms_per_frame: f64,
}

/// Times full merges (automatic alignment) of synthetic bursts at each size.
/// Sizes are the square side closest to the requested megapixels, rounded to
/// a multiple of 32.
pub fn measure_scaling(
    megapixels: &[f64],
    frames: usize,
    repeats: usize,
    cfg: &MergeConfig,
) -> Result<Vec<ScalingPoint>> {
    let tile =
        BlobScene::new(SCALING_TILE, SCALING_TILE, 160, 11).render(SCALING_TILE, SCALING_TILE);
    let mut out = Vec::new();
    for &mp in megapixels {
        let side = (((mp * 1e6).sqrt() / 32.0).round() as usize).max(2) * 32;
        let truth = mirror_tiled(&tile, side);
        let case = SyntheticCase::new(&truth, frames, DEFAULT_OFFSET_SIGMA, 5)?;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let (_, ms) = timed(|| merge_burst(&case.burst, cfg))?;
            best = best.min(ms);
        }
        out.push(ScalingPoint {
            megapixels: (side * side) as f64 / 1e6,
            frames,
            ms_per_frame: best / frames as f64,
        });
    }
    Ok(out)
}

const SCALING_TILE: usize = 256;

/// `side`x`side` image made of mirrored copies of `tile`, so content cost
/// does not grow with size.
fn mirror_tiled(tile: &RgbImage, side: usize) -> RgbImage {
    let (tw, th) = tile.dims();
    let fold = |v: usize, n: usize| {
        let m = v % (2 * n);
        if m < n {
            m
        } else {
            2 * n - 1 - m
        }
    };
    RgbImage::from_fn(side, side, |x, y| tile.get(fold(x, tw), fold(y, th)))
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    (a, b, r2)
}

/// True when the report holds the PSNR cap (self-comparison).
pub fn is_capped(psnr_db: f64) -> bool {
    psnr_db >= PSNR_CAP_DB
}
