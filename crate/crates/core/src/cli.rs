//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
//! 3 invariant violation. Every error goes to standard error prefixed with
//! `burstfuse:`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::align::{align_burst, chi_square_uniformity, subpixel_offset_histogram, AlignmentField};
use crate::bench::{
    self, default_corruption_specs, load_dataset, pipeline_tile_size, BenchConfig, BenchReport,
    SweepAlignment,
};
use crate::config;
use crate::error::{Error, Result};
use crate::io::{load_burst_dir, load_rgb_image, save_burst_dir, save_rgb16_png};
use crate::merge::{merge_burst_with_alignment, AlignmentMode, FinishConfig, MergeConfig};
use crate::noise::{
    calibrated_tables, NoiseParams, DEFAULT_TABLE_BINS, DEFAULT_TABLE_SAMPLES, DEFAULT_TABLE_SEED,
};
use crate::synth::{
    generate_burst_offsets, oracle_fields, synthesize_burst_with, CorruptionMode, CorruptionSpec,
    OffsetList, SynthOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

/// Offsets file written next to synthesized bursts.
pub const OFFSETS_FILE: &str = "offsets.csv";

#[derive(Parser, Debug)]
#[command(
    name = "burstfuse",
    version,
    about = "Multi-frame super-resolution and demosaicing of Bayer raw bursts"
)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge a burst directory into one RGB image.
    Merge(MergeArgs),
    /// Synthesize a burst from a ground-truth RGB image.
    Synth(SynthArgs),
    /// Synthetic-dataset PSNR/SSIM bench.
    Bench(BenchArgs),
    /// Alignment-corruption robustness sweep.
    CorruptBench(CorruptArgs),
    /// Quality as a function of the number of merged frames.
    FramesSweep(SweepArgs),
    /// Histogram of fractional alignment offsets of a burst.
    AnalyzeOffsets(AnalyzeArgs),
    /// Monte-Carlo noise tables for a noise model.
    CalibrateNoise(CalibrateArgs),
}

/// Options shared by everything that merges.
#[derive(Args, Debug, Clone, Default)]
struct CommonMerge {
    /// key=value configuration file (also read from BURSTFUSE_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set k_detail=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

impl CommonMerge {
    fn merge_config(&self) -> Result<MergeConfig> {
        let mut cfg = config::load(self.config.as_deref())?;
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("`--set {kv}`: expected KEY=VALUE")))?;
            config::apply_setting(&mut cfg, k.trim(), v.trim())?;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlignArg {
    Auto,
    Oracle,
    Csv,
}

#[derive(Args, Debug)]
struct MergeArgs {
    /// Burst directory (frame_NNN.png + burst.txt).
    #[arg(long)]
    burst: PathBuf,
    /// Output 16-bit PNG.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    zoom: Option<f64>,
    #[arg(long, value_enum)]
    alignment: Option<AlignArg>,
    /// Offsets CSV for oracle alignment [default: <burst>/offsets.csv].
    #[arg(long)]
    offsets: Option<PathBuf>,
    /// Directory of field_NNN.csv files for csv alignment.
    #[arg(long)]
    fields: Option<PathBuf>,
    /// Tile size of the csv fields [default: the SNR-derived tile size].
    #[arg(long)]
    tile_size: Option<usize>,
    /// Maximum number of frames accepted.
    #[arg(long)]
    frame_cap: Option<usize>,
    /// Apply unsharp masking and the tone curve.
    #[arg(long)]
    finish: bool,
    #[arg(long)]
    debug_robustness: Option<PathBuf>,
    #[arg(long)]
    debug_kernels: Option<PathBuf>,
    /// Per-frame diagnostics CSV.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    common: CommonMerge,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Ground-truth RGB image.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = bench::DEFAULT_BURST_FRAMES)]
    frames: usize,
    /// Standard deviation of the Gaussian offsets (px).
    #[arg(long, default_value_t = bench::DEFAULT_OFFSET_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output burst directory.
    #[arg(long)]
    out: PathBuf,
    /// Center crop of the truth before synthesis.
    #[arg(long)]
    crop: Option<usize>,
    /// Heteroscedastic noise slope (adds noise when either noise value is set).
    #[arg(long)]
    noise_slope: Option<f64>,
    #[arg(long)]
    noise_intercept: Option<f64>,
    #[arg(long, default_value_t = 1)]
    noise_seed: u64,
}

#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Directory of ground-truth RGB images.
    #[arg(long)]
    dataset: PathBuf,
    /// Report CSV.
    #[arg(long)]
    out: PathBuf,
    /// Center-crop every image to at most this size.
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long, default_value_t = bench::DEFAULT_BURST_FRAMES)]
    frames: usize,
    #[arg(long, default_value_t = bench::DEFAULT_OFFSET_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = bench::DEFAULT_BENCH_SEED)]
    seed: u64,
    /// Border excluded from the metrics.
    #[arg(long, default_value_t = bench::DEFAULT_BORDER_CROP)]
    border: usize,
    #[command(flatten)]
    common: CommonMerge,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Oracle alignment only (skips the automatic-alignment merge).
    #[arg(long)]
    oracle: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum CorruptMode {
    TileReplace,
    VectorNoise,
    Both,
}

#[derive(Args, Debug)]
struct CorruptArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, value_enum, default_value = "both")]
    mode: CorruptMode,
    /// Comma-separated levels (p or sigma) instead of the default sweep.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Comma-separated frame counts [default: 1..=frames].
    #[arg(long = "n", value_delimiter = ',')]
    n: Vec<usize>,
    /// Use oracle instead of automatic alignment.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    burst: PathBuf,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    /// Histogram CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write each frame's alignment field as field_NNN.csv here.
    #[arg(long)]
    fields_out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonMerge,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[arg(long)]
    slope: f64,
    #[arg(long)]
    intercept: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TABLE_BINS)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_TABLE_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = DEFAULT_TABLE_SEED)]
    seed: u64,
}

/// Maps a library error to its exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        e if e.is_io() => EXIT_IO,
        _ => EXIT_INVARIANT,
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    EXIT_OK
                }
                _ => {
                    let msg = e.render().to_string();
                    let msg = msg.trim_start_matches("error: ");
                    eprint!("burstfuse: {msg}");
                    EXIT_USAGE
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_target(false)
        .try_init();
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("burstfuse: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Merge(a) => cmd_merge(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Bench(a) => cmd_bench(a),
        Command::CorruptBench(a) => cmd_corrupt(a),
        Command::FramesSweep(a) => cmd_sweep(a),
        Command::AnalyzeOffsets(a) => cmd_analyze(a),
        Command::CalibrateNoise(a) => cmd_calibrate(a),
    }
}

pub fn field_file_name(frame: usize) -> String {
    format!("field_{frame:03}.csv")
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    let mut cfg = a.common.merge_config()?;
    if let Some(z) = a.zoom {
        cfg.zoom = z;
    }
    if let Some(m) = a.alignment {
        cfg.alignment = match m {
            AlignArg::Auto => AlignmentMode::Auto,
            AlignArg::Oracle => AlignmentMode::Oracle,
            AlignArg::Csv => AlignmentMode::Csv,
        };
    }
    if let Some(c) = a.frame_cap {
        cfg.frame_cap = c;
    }
    if a.finish {
        cfg.finish = Some(FinishConfig::default());
    }
    if a.debug_robustness.is_some() {
        cfg.debug_robustness = a.debug_robustness.clone();
    }
    if a.debug_kernels.is_some() {
        cfg.debug_kernels = a.debug_kernels.clone();
    }
    cfg.validate()?;
    let burst = load_burst_dir(&a.burst, cfg.frame_cap)?;
    let (w, h) = burst.dims();
    let fields: Option<Vec<AlignmentField>> = match cfg.alignment {
        AlignmentMode::Auto => None,
        AlignmentMode::Oracle => {
            let path = a
                .offsets
                .clone()
                .unwrap_or_else(|| a.burst.join(OFFSETS_FILE));
            let offsets = OffsetList::read_csv(&path)?;
            if offsets.len() != burst.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} offsets in {} for {} frames",
                    offsets.len(),
                    path.display(),
                    burst.len()
                )));
            }
            Some(oracle_fields(
                &offsets,
                w,
                h,
                pipeline_tile_size(&burst, &cfg),
            ))
        }
        AlignmentMode::Csv => {
            let dir = a.fields.clone().ok_or_else(|| {
                Error::InvalidArgument("--alignment csv needs --fields DIR".into())
            })?;
            let ts = a
                .tile_size
                .unwrap_or_else(|| pipeline_tile_size(&burst, &cfg));
            let fields = (0..burst.len())
                .map(|i| AlignmentField::read_csv(&dir.join(field_file_name(i)), ts, i))
                .collect::<Result<Vec<_>>>()?;
            Some(fields)
        }
    };
    let out = merge_burst_with_alignment(&burst, &cfg, fields.as_deref())?;
    save_rgb16_png(&out.image, &a.out)?;
    if let Some(p) = &a.diagnostics {
        out.diagnostics.write_csv(p)?;
    }
    let (ow, oh) = out.image.dims();
    println!(
        "merged {} frames -> {} ({ow}x{oh}), snr {:.1}",
        burst.len(),
        a.out.display(),
        out.diagnostics.snr
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let truth = load_rgb_image(&a.truth)?;
    let truth = match a.crop {
        Some(c) => truth.center_crop(c),
        None => {
            let (w, h) = truth.dims();
            truth.crop(0, 0, w & !1, h & !1)
        }
    };
    if a.frames == 0 {
        return Err(Error::InvalidArgument("--frames must be at least 1".into()));
    }
    let noise = match (a.noise_slope, a.noise_intercept) {
        (None, None) => None,
        (s, i) => Some(NoiseParams::new(s.unwrap_or(0.0), i.unwrap_or(0.0))?),
    };
    let offsets = generate_burst_offsets(a.frames, a.sigma, a.seed);
    let burst = synthesize_burst_with(
        &truth,
        &offsets,
        &SynthOptions {
            noise,
            noise_seed: a.noise_seed,
        },
    )?;
    save_burst_dir(&burst, &a.out)?;
    offsets.write_csv(&a.out.join(OFFSETS_FILE))?;
    println!("wrote {} frames to {}", burst.len(), a.out.display());
    Ok(())
}

fn bench_setup(d: &DatasetArgs) -> Result<(bench::Dataset, BenchConfig)> {
    let merge = d.common.merge_config()?;
    if d.frames == 0 {
        return Err(Error::InvalidArgument("--frames must be at least 1".into()));
    }
    let ds = load_dataset(&d.dataset, d.crop)?;
    if ds.images.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no readable images in {}",
            d.dataset.display()
        )));
    }
    let cfg = BenchConfig {
        frames: d.frames,
        sigma: d.sigma,
        seed: d.seed,
        border_crop: d.border,
        merge,
        ..Default::default()
    };
    Ok((ds, cfg))
}

fn print_means(report: &BenchReport) {
    for c in report.config_ids() {
        if let Some((p, s)) = report.mean(&c) {
            println!("{c:<24} mean PSNR {p:7.3} dB  mean SSIM {s:.5}");
        }
    }
}

fn finish_report(report: &BenchReport, out: &Path) -> Result<()> {
    report.write_csv(out)?;
    print_means(report);
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let (ds, mut cfg) = bench_setup(&a.data)?;
    cfg.auto = !a.oracle;
    let report = bench::run_synthetic_bench(&ds, &cfg)?;
    finish_report(&report, &a.data.out)
}

fn cmd_corrupt(a: CorruptArgs) -> Result<()> {
    let (ds, cfg) = bench_setup(&a.data)?;
    let seed = cfg.seed;
    let specs: Vec<CorruptionSpec> = if a.levels.is_empty() {
        default_corruption_specs(seed)
    } else {
        let mut v = Vec::new();
        for &l in &a.levels {
            if a.mode != CorruptMode::VectorNoise {
                v.push(CorruptionSpec::tile_replace(l, seed));
            }
            if a.mode != CorruptMode::TileReplace {
                v.push(CorruptionSpec::vector_noise(l, seed));
            }
        }
        v
    };
    let specs: Vec<_> = specs
        .into_iter()
        .filter(|s| match a.mode {
            CorruptMode::Both => true,
            CorruptMode::TileReplace => s.mode == CorruptionMode::TileReplace,
            CorruptMode::VectorNoise => s.mode == CorruptionMode::VectorNoise,
        })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    let report = bench::run_corruption_bench(&ds, &specs, &cfg)?;
    finish_report(&report, &a.data.out)
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let (ds, cfg) = bench_setup(&a.data)?;
    let ns: Vec<usize> = if a.n.is_empty() {
        (1..=cfg.frames).collect()
    } else {
        a.n.clone()
    };
    let mode = if a.oracle {
        SweepAlignment::Oracle
    } else {
        SweepAlignment::Auto
    };
    let report = bench::run_frames_sweep(&ds, &ns, mode, &cfg)?;
    finish_report(&report, &a.data.out)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let cfg = a.common.merge_config()?;
    if a.bins == 0 {
        return Err(Error::InvalidArgument("--bins must be at least 1".into()));
    }
    let burst = load_burst_dir(&a.burst, cfg.frame_cap)?;
    let tile = pipeline_tile_size(&burst, &cfg);
    let fields = crate::merge::with_thread_count(cfg.threads, || {
        align_burst(&burst, &cfg.align_config(tile))
    })?;
    if let Some(dir) = &a.fields_out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for f in &fields {
            f.write_csv(&dir.join(field_file_name(f.frame_index())))?;
        }
    }
    let others: Vec<AlignmentField> = fields
        .into_iter()
        .filter(|f| f.frame_index() != burst.base_index())
        .collect();
    if others.is_empty() {
        return Err(Error::InvalidArgument(
            "burst has no non-base frames to analyze".into(),
        ));
    }
    let hist = subpixel_offset_histogram(&others, a.bins);
    hist.write_csv(&a.out)?;
    for (axis, name) in [(0, "x"), (1, "y")] {
        let m = hist.marginal(axis);
        let (stat, p) = chi_square_uniformity(&m);
        let occupied = m.iter().filter(|&&c| c > 0).count();
        println!(
            "{name}: {occupied}/{} bins occupied, chi-square {stat:.2}, p = {p:.4}",
            a.bins
        );
    }
    println!("histogram written to {}", a.out.display());
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let params = NoiseParams::new(a.slope, a.intercept)?;
    if a.bins < 2 || a.samples == 0 {
        return Err(Error::InvalidArgument(
            "need at least 2 bins and 1 sample".into(),
        ));
    }
    let tables = calibrated_tables(params, a.bins, a.samples, a.seed, None);
    tables.write_csv(&a.out)?;
    println!("{} bins written to {}", tables.len(), a.out.display());
    Ok(())
}
