//! Heteroscedastic sensor noise model, Monte Carlo calibration of the
//! expected local statistics on flat patches, SNR estimation and the
//! SNR-dependent tuning table.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::raw::BayerFrame;

/// Noise variance as a linear function of brightness, in normalized units.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseParams {
    pub slope: f64,
    pub intercept: f64,
}

impl NoiseParams {
    pub fn new(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope >= 0.0 && intercept >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise slope ({slope}) and intercept ({intercept}) must be non-negative"
            )));
        }
        Ok(Self { slope, intercept })
    }

    pub fn is_noiseless(&self) -> bool {
        self.slope == 0.0 && self.intercept == 0.0
    }
}

pub fn noise_variance_at(brightness: f64, params: NoiseParams) -> f64 {
    params.slope * brightness + params.intercept
}

/// Upper bound reported by [`estimate_snr`].
pub const SNR_CAP: f64 = 100.0;

/// Mean frame brightness over the noise standard deviation at that brightness.
pub fn estimate_snr(base: &BayerFrame, params: NoiseParams) -> f64 {
    let mu = base.data().mean();
    let var = noise_variance_at(mu, params);
    if var <= 0.0 {
        return SNR_CAP;
    }
    (mu / var.sqrt()).min(SNR_CAP)
}

pub const DEFAULT_TABLE_BINS: usize = 64;
pub const DEFAULT_TABLE_SAMPLES: usize = 100_000;
pub const DEFAULT_TABLE_SEED: u64 = 0x5eed_0001;

/// Expected 3x3 spatial standard deviation and expected inter-frame mean
/// difference on flat patches, tabulated over brightness.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTables {
    brightness: Vec<f64>,
    sigma_md: Vec<f64>,
    d_md: Vec<f64>,
}

impl NoiseTables {
    pub fn from_columns(brightness: Vec<f64>, sigma_md: Vec<f64>, d_md: Vec<f64>) -> Result<Self> {
        if brightness.len() < 2
            || brightness.len() != sigma_md.len()
            || brightness.len() != d_md.len()
        {
            return Err(Error::InvalidArgument(
                "noise table columns must have equal length >= 2".into(),
            ));
        }
        if brightness.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "noise table brightness must increase".into(),
            ));
        }
        Ok(Self {
            brightness,
            sigma_md,
            d_md,
        })
    }

    /// All-zero tables for a noiseless sensor.
    pub fn zeros(bins: usize) -> Self {
        let bins = bins.max(2);
        Self {
            brightness: (0..bins).map(|i| i as f64 / (bins - 1) as f64).collect(),
            sigma_md: vec![0.0; bins],
            d_md: vec![0.0; bins],
        }
    }

    pub fn len(&self) -> usize {
        self.brightness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.brightness.is_empty()
    }

    pub fn brightness(&self) -> &[f64] {
        &self.brightness
    }

    pub fn sigma_md(&self) -> &[f64] {
        &self.sigma_md
    }

    pub fn d_md(&self) -> &[f64] {
        &self.d_md
    }

    /// Linear interpolation of `(sigma_md, d_md)` at `brightness`, clamped
    /// to the tabulated range.
    pub fn lookup(&self, brightness: f64) -> (f64, f64) {
        let n = self.brightness.len();
        let lo = self.brightness[0];
        let hi = self.brightness[n - 1];
        let b = if brightness.is_finite() {
            brightness.clamp(lo, hi)
        } else {
            lo
        };
        let idx = self.brightness.partition_point(|&v| v <= b).clamp(1, n - 1);
        let (b0, b1) = (self.brightness[idx - 1], self.brightness[idx]);
        let t = (b - b0) / (b1 - b0);
        let lerp = |v: &[f64]| v[idx - 1] + (v[idx] - v[idx - 1]) * t;
        (lerp(&self.sigma_md), lerp(&self.d_md))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("brightness,sigma_md,d_md\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.6},{:.9e},{:.9e}\n",
                self.brightness[i], self.sigma_md[i], self.d_md[i]
            ));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
        let (mut b, mut s, mut d) = (Vec::new(), Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record.map_err(|e| csv_err(e.to_string()))?;
            let field = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| csv_err(format!("bad value in column {i}")))
            };
            b.push(field(0)?);
            s.push(field(1)?);
            d.push(field(2)?);
        }
        Self::from_columns(b, s, d).map_err(|e| csv_err(e.to_string()))
    }
}

/// Simulates flat 3x3 patches at each brightness level, with the noise
/// clipped to [0, 1] like a real sensor, and tabulates the mean sample
/// standard deviation (Bessel-corrected, divided by the c4 bias factor) and
/// the mean absolute difference of two independent patch means.
pub fn mc_calibrate_tables(
    params: NoiseParams,
    bins: usize,
    samples: usize,
    seed: u64,
) -> NoiseTables {
    let bins = bins.max(2);
    if params.is_noiseless() {
        return NoiseTables::zeros(bins);
    }
    let brightness: Vec<f64> = (0..bins).map(|i| i as f64 / (bins - 1) as f64).collect();
    let rows: Vec<(f64, f64)> = brightness
        .par_iter()
        .enumerate()
        .map(|(bin, &b)| {
            let std = noise_variance_at(b, params).max(0.0).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(bin as u64);
            let draw = |rng: &mut ChaCha8Rng| -> f64 {
                let n: f64 = StandardNormal.sample(rng);
                (b + std * n).clamp(0.0, 1.0)
            };
            let (mut sum_std, mut sum_diff) = (0.0f64, 0.0f64);
            for _ in 0..samples {
                let mut patch = [0.0f64; 9];
                patch.iter_mut().for_each(|v| *v = draw(&mut rng));
                let mean = patch.iter().sum::<f64>() / 9.0;
                let var = patch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
                sum_std += var.sqrt();
                let other = (0..9).map(|_| draw(&mut rng)).sum::<f64>() / 9.0;
                sum_diff += (mean - other).abs();
            }
            let n = samples.max(1) as f64;
            (sum_std / (n * c4(9)), sum_diff / n)
        })
        .collect();
    NoiseTables {
        brightness,
        sigma_md: rows.iter().map(|r| r.0).collect(),
        d_md: rows.iter().map(|r| r.1).collect(),
    }
}

/// Bias factor of the Bessel-corrected sample standard deviation of `n`
/// Gaussian samples: `E[s] = c4(n) * sigma`.
fn c4(n: usize) -> f64 {
    let n = n as f64;
    (2.0 / (n - 1.0)).sqrt() * (ln_gamma(n / 2.0) - ln_gamma((n - 1.0) / 2.0)).exp()
}

fn cache_file_name(params: NoiseParams, bins: usize, samples: usize, seed: u64) -> String {
    format!(
        "noise_{:016x}_{:016x}_{bins}_{samples}_{seed:x}.csv",
        params.slope.to_bits(),
        params.intercept.to_bits()
    )
}

type TableKey = (u64, u64, usize, usize, u64);

fn memo() -> &'static Mutex<HashMap<TableKey, Arc<NoiseTables>>> {
    static MEMO: OnceLock<Mutex<HashMap<TableKey, Arc<NoiseTables>>>> = OnceLock::new();
    MEMO.get_or_init(Default::default)
}

/// Calibrated tables with an in-process memo and an optional on-disk cache
/// keyed by the noise parameters.
pub fn calibrated_tables(
    params: NoiseParams,
    bins: usize,
    samples: usize,
    seed: u64,
    cache_dir: Option<&Path>,
) -> Arc<NoiseTables> {
    let key = (
        params.slope.to_bits(),
        params.intercept.to_bits(),
        bins,
        samples,
        seed,
    );
    if let Some(t) = memo().lock().expect("noise memo poisoned").get(&key) {
        return t.clone();
    }
    let cache_path: Option<PathBuf> =
        cache_dir.map(|d| d.join(cache_file_name(params, bins, samples, seed)));
    let tables = cache_path
        .as_deref()
        .and_then(|p| NoiseTables::read_csv(p).ok())
        .unwrap_or_else(|| {
            let t = mc_calibrate_tables(params, bins, samples, seed);
            if let Some(p) = cache_path.as_deref() {
                if let Err(e) = std::fs::create_dir_all(p.parent().unwrap_or(Path::new(".")))
                    .map_err(|e| Error::io(p, e))
                    .and_then(|_| t.write_csv(p))
                {
                    log::warn!("could not cache noise tables: {e}");
                }
            }
            t
        });
    let tables = Arc::new(tables);
    memo()
        .lock()
        .expect("noise memo poisoned")
        .insert(key, tables.clone());
    tables
}

/// Tuning knobs for kernels, alignment tiles and robustness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TuningParams {
    /// Alignment tile size in full-resolution pixels.
    pub tile_size: usize,
    /// Base kernel standard deviation (px).
    pub k_detail: f64,
    /// Kernel standard deviation multiplier used for denoising.
    pub k_denoise: f64,
    pub d_th: f64,
    pub d_tr: f64,
    pub k_stretch: f64,
    pub k_shrink: f64,
    /// Robustness threshold.
    pub t: f64,
    /// Robustness scale where local motion exceeds `m_th`.
    pub s1: f64,
    /// Robustness scale elsewhere.
    pub s2: f64,
    /// Local motion threshold (px).
    pub m_th: f64,
}

/// Per-field replacements applied on top of the SNR-derived tuning.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TuningOverrides {
    pub tile_size: Option<usize>,
    pub k_detail: Option<f64>,
    pub k_denoise: Option<f64>,
    pub d_th: Option<f64>,
    pub d_tr: Option<f64>,
    pub k_stretch: Option<f64>,
    pub k_shrink: Option<f64>,
    pub t: Option<f64>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub m_th: Option<f64>,
}

impl TuningOverrides {
    /// Overrides every field of `p`.
    pub fn all(p: TuningParams) -> Self {
        Self {
            tile_size: Some(p.tile_size),
            k_detail: Some(p.k_detail),
            k_denoise: Some(p.k_denoise),
            d_th: Some(p.d_th),
            d_tr: Some(p.d_tr),
            k_stretch: Some(p.k_stretch),
            k_shrink: Some(p.k_shrink),
            t: Some(p.t),
            s1: Some(p.s1),
            s2: Some(p.s2),
            m_th: Some(p.m_th),
        }
    }

    pub fn apply(&self, p: TuningParams) -> TuningParams {
        TuningParams {
            tile_size: self.tile_size.unwrap_or(p.tile_size),
            k_detail: self.k_detail.unwrap_or(p.k_detail),
            k_denoise: self.k_denoise.unwrap_or(p.k_denoise),
            d_th: self.d_th.unwrap_or(p.d_th),
            d_tr: self.d_tr.unwrap_or(p.d_tr),
            k_stretch: self.k_stretch.unwrap_or(p.k_stretch),
            k_shrink: self.k_shrink.unwrap_or(p.k_shrink),
            t: self.t.unwrap_or(p.t),
            s1: self.s1.unwrap_or(p.s1),
            s2: self.s2.unwrap_or(p.s2),
            m_th: self.m_th.unwrap_or(p.m_th),
        }
    }
}

pub const SNR_LOW: f64 = 6.0;
pub const SNR_HIGH: f64 = 30.0;
const TILE_SIZES: [usize; 3] = [16, 32, 64];

/// Piecewise-linear tuning over SNR in [6, 30], clamped outside. Low SNR gets
/// the stronger denoising end of every range.
pub fn tuning_for_snr(snr: f64) -> TuningParams {
    let u = if snr.is_finite() {
        ((snr - SNR_LOW) / (SNR_HIGH - SNR_LOW)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let lerp = |low_snr: f64, high_snr: f64| low_snr + (high_snr - low_snr) * u;
    let tile = lerp(64.0, 16.0);
    let tile_size = *TILE_SIZES
        .iter()
        .min_by(|a, b| {
            let da = (**a as f64 - tile).abs();
            let db = (**b as f64 - tile).abs();
            da.partial_cmp(&db).unwrap().then(b.cmp(a))
        })
        .unwrap();
    TuningParams {
        tile_size,
        k_detail: lerp(0.33, 0.25),
        k_denoise: lerp(5.0, 3.0),
        d_th: lerp(0.010, 0.001),
        d_tr: lerp(0.020, 0.006),
        k_stretch: 4.0,
        k_shrink: 2.0,
        t: 0.12,
        s1: 12.0,
        s2: 2.0,
        m_th: 0.8,
    }
}

impl Default for TuningParams {
    fn default() -> Self {
        tuning_for_snr(SNR_HIGH)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Plane;
    use approx::assert_abs_diff_eq;

    #[test]
    fn variance_is_affine() {
        let p = NoiseParams::new(0.02, 0.0001).unwrap();
        assert_eq!(noise_variance_at(0.0, p), 0.0001);
        assert_abs_diff_eq!(noise_variance_at(0.5, p), 0.0101, epsilon = 1e-15);
        let flat = NoiseParams::new(0.0, 0.003).unwrap();
        assert_eq!(noise_variance_at(0.1, flat), noise_variance_at(0.9, flat));
        assert!(NoiseParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn snr_estimates() {
        let f = BayerFrame::from_plane(Plane::filled(4, 4, 0.25)).unwrap();
        let p = NoiseParams::new(0.0, 0.0001).unwrap();
        assert_abs_diff_eq!(estimate_snr(&f, p), 25.0, epsilon = 1e-9);
        assert_eq!(estimate_snr(&f, NoiseParams::default()), SNR_CAP);
        let a = NoiseParams::new(0.001, 0.0).unwrap();
        let b = NoiseParams::new(0.002, 0.0).unwrap();
        assert!(estimate_snr(&f, b) < estimate_snr(&f, a));
    }

    #[test]
    fn tuning_endpoints_and_midpoint() {
        for snr in [30.0, 45.0, 1e6] {
            let t = tuning_for_snr(snr);
            assert_abs_diff_eq!(t.k_detail, 0.25, epsilon = 1e-12);
            assert_abs_diff_eq!(t.k_denoise, 3.0, epsilon = 1e-12);
            assert_abs_diff_eq!(t.d_th, 0.001, epsilon = 1e-12);
            assert_abs_diff_eq!(t.d_tr, 0.006, epsilon = 1e-12);
            assert_eq!(t.tile_size, 16);
        }
        for snr in [6.0, 2.0, 0.1] {
            let t = tuning_for_snr(snr);
            assert_abs_diff_eq!(t.k_detail, 0.33, epsilon = 1e-12);
            assert_abs_diff_eq!(t.k_denoise, 5.0, epsilon = 1e-12);
            assert_abs_diff_eq!(t.d_th, 0.010, epsilon = 1e-12);
            assert_abs_diff_eq!(t.d_tr, 0.020, epsilon = 1e-12);
            assert_eq!(t.tile_size, 64);
        }
        let mid = tuning_for_snr(18.0);
        assert_abs_diff_eq!(mid.k_detail, 0.29, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.k_denoise, 4.0, epsilon = 1e-12);
        assert_eq!(mid.tile_size, 32);
        assert_eq!(
            (mid.k_stretch, mid.k_shrink, mid.t, mid.s1, mid.s2, mid.m_th),
            (4.0, 2.0, 0.12, 12.0, 2.0, 0.8)
        );
    }

    #[test]
    fn tuning_is_monotone_and_continuous() {
        let mut prev = tuning_for_snr(6.0);
        let mut snr = 6.0;
        while snr < 30.0 {
            snr += 0.01;
            let t = tuning_for_snr(snr);
            assert!(t.k_detail <= prev.k_detail && t.k_denoise <= prev.k_denoise);
            assert!(t.d_th <= prev.d_th && t.d_tr <= prev.d_tr && t.tile_size <= prev.tile_size);
            assert!((t.k_detail - prev.k_detail).abs() < 1e-4);
            prev = t;
        }
    }

    #[test]
    fn zero_noise_tables_are_zero() {
        let t = mc_calibrate_tables(NoiseParams::default(), 16, 10_000, 1);
        assert!(t.sigma_md().iter().chain(t.d_md()).all(|&v| v == 0.0));
    }

    #[test]
    fn mid_brightness_sigma_matches_gaussian() {
        let p = NoiseParams::new(0.0004, 0.0001).unwrap();
        let t = mc_calibrate_tables(p, 17, 20_000, 7);
        let i = 8; // b = 0.5, std ~= 0.0173, far from clipping
        let expected = noise_variance_at(0.5, p).sqrt();
        assert!(
            (t.sigma_md()[i] / expected - 1.0).abs() < 0.03,
            "{} vs {}",
            t.sigma_md()[i],
            expected
        );
        // E|mean1 - mean2| = sqrt(2/pi) * sigma * sqrt(2/9)
        let d_expected = (2.0 / std::f64::consts::PI).sqrt() * expected * (2.0f64 / 9.0).sqrt();
        assert!((t.d_md()[i] / d_expected - 1.0).abs() < 0.03);
    }

    #[test]
    fn clipping_shrinks_sigma_at_white() {
        let p = NoiseParams::new(0.004, 0.0).unwrap();
        let t = mc_calibrate_tables(p, 16, 10_000, 3);
        let last = t.len() - 1;
        assert!(t.sigma_md()[last] < noise_variance_at(1.0, p).sqrt());
    }

    #[test]
    fn tables_are_reproducible_and_monotone() {
        let p = NoiseParams::new(0.001, 0.00001).unwrap();
        let a = mc_calibrate_tables(p, 16, 10_000, 42);
        let b = mc_calibrate_tables(p, 16, 10_000, 42);
        assert_eq!(a, b);
        // below the clipping regime
        for i in 1..8 {
            assert!(a.sigma_md()[i] >= a.sigma_md()[i - 1]);
            assert!(a.d_md()[i] >= a.d_md()[i - 1]);
        }
        assert!(a.sigma_md().iter().chain(a.d_md()).all(|&v| v >= 0.0));
    }

    #[test]
    fn lookup_interpolates() {
        let t = NoiseTables::from_columns(
            vec![0.0, 0.5, 1.0],
            vec![0.0, 1.0, 3.0],
            vec![2.0, 2.0, 0.0],
        )
        .unwrap();
        assert_eq!(t.lookup(0.25), (0.5, 2.0));
        assert_eq!(t.lookup(0.75), (2.0, 1.0));
        assert_eq!(t.lookup(-3.0), (0.0, 2.0));
        assert_eq!(t.lookup(1.0), (3.0, 0.0));
    }

    #[test]
    fn csv_round_trip_and_cache() {
        let dir = tempfile::tempdir().unwrap();
        let p = NoiseParams::new(0.002, 0.00002).unwrap();
        let t = calibrated_tables(p, 16, 10_000, 9, Some(dir.path()));
        let file = dir.path().join(cache_file_name(p, 16, 10_000, 9));
        let back = NoiseTables::read_csv(&file).unwrap();
        for (a, b) in t.sigma_md().iter().zip(back.sigma_md()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12));
        }
    }
}
