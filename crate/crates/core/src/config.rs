//! Plain-text `key=value` configuration.
//!
//! Every merge setting can be set from a file given with `--config` or the
//! `BURSTFUSE_CONFIG` environment variable; command-line flags are applied
//! afterwards and win. Unknown keys and ill-typed values are errors.
//!
//! ```text
//! # high-SNR tuning with a wider search
//! zoom = 1.5
//! k_detail = 0.3
//! search_radius = 6
//! threads = 1
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::io::parse_key_values;
use crate::merge::{AlignmentMode, FinishConfig, MergeConfig};

pub const CONFIG_ENV: &str = "BURSTFUSE_CONFIG";

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "zoom",
    "frame_cap",
    "alignment",
    "tile_size",
    "k_detail",
    "k_denoise",
    "d_th",
    "d_tr",
    "k_stretch",
    "k_shrink",
    "t",
    "s1",
    "s2",
    "m_th",
    "pyramid_levels",
    "search_radius",
    "lk_iterations",
    "robustness",
    "hf_reject",
    "loss_threshold",
    "noise_table_bins",
    "noise_table_samples",
    "noise_table_seed",
    "noise_cache_dir",
    "finish",
    "debug_robustness",
    "debug_kernels",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!(
            "`{key}`: cannot parse `{value}` as {}",
            std::any::type_name::<T>()
        ))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected a boolean, got `{value}`"
        ))),
    }
}

/// Applies one setting to `cfg`.
pub fn apply_setting(cfg: &mut MergeConfig, key: &str, value: &str) -> Result<()> {
    let t = &mut cfg.tuning;
    match key {
        "zoom" => cfg.zoom = parse(key, value)?,
        "frame_cap" => cfg.frame_cap = parse(key, value)?,
        "alignment" => {
            cfg.alignment = AlignmentMode::parse(value).map_err(|e| Error::Config(e.to_string()))?
        }
        "tile_size" => t.tile_size = Some(parse(key, value)?),
        "k_detail" => t.k_detail = Some(parse(key, value)?),
        "k_denoise" => t.k_denoise = Some(parse(key, value)?),
        "d_th" => t.d_th = Some(parse(key, value)?),
        "d_tr" => t.d_tr = Some(parse(key, value)?),
        "k_stretch" => t.k_stretch = Some(parse(key, value)?),
        "k_shrink" => t.k_shrink = Some(parse(key, value)?),
        "t" => t.t = Some(parse(key, value)?),
        "s1" => t.s1 = Some(parse(key, value)?),
        "s2" => t.s2 = Some(parse(key, value)?),
        "m_th" => t.m_th = Some(parse(key, value)?),
        "pyramid_levels" => cfg.pyramid_levels = parse(key, value)?,
        "search_radius" => cfg.search_radius = parse(key, value)?,
        "lk_iterations" => cfg.lk_iterations = parse(key, value)?,
        "robustness" => cfg.robustness = parse_bool(key, value)?,
        "hf_reject" => cfg.robust.hf_reject = parse_bool(key, value)?,
        "loss_threshold" => cfg.robust.loss_threshold = parse(key, value)?,
        "noise_table_bins" => cfg.noise_table_bins = parse(key, value)?,
        "noise_table_samples" => cfg.noise_table_samples = parse(key, value)?,
        "noise_table_seed" => cfg.noise_table_seed = parse(key, value)?,
        "noise_cache_dir" => cfg.noise_cache_dir = Some(PathBuf::from(value)),
        "finish" => cfg.finish = parse_bool(key, value)?.then(FinishConfig::default),
        "debug_robustness" => cfg.debug_robustness = Some(PathBuf::from(value)),
        "debug_kernels" => cfg.debug_kernels = Some(PathBuf::from(value)),
        "threads" => cfg.threads = Some(parse(key, value)?),
        _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
    }
    Ok(())
}

/// Parses configuration text on top of `cfg`.
pub fn apply_text(cfg: &mut MergeConfig, text: &str) -> Result<()> {
    let map = parse_key_values(text).map_err(Error::Config)?;
    for (k, v) in &map {
        apply_setting(cfg, k, v)?;
    }
    Ok(())
}

pub fn load_file(path: &Path) -> Result<MergeConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = MergeConfig::default();
    apply_text(&mut cfg, &text)?;
    Ok(cfg)
}

/// Defaults, overlaid with `explicit` or else the file named by
/// `BURSTFUSE_CONFIG` when set.
pub fn load(explicit: Option<&Path>) -> Result<MergeConfig> {
    match explicit {
        Some(p) => load_file(p),
        None => match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => load_file(Path::new(&p)),
            _ => Ok(MergeConfig::default()),
        },
    }
}
