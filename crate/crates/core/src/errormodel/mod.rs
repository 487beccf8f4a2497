//! Robust Gaussian local-error models per environment and error-stream
//! sampling.

mod mcd;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::EnvironmentClass;
use crate::ingest::{Band, Constellation, SatelliteId};
use crate::residuals::ResidualSample;
use crate::{Error, GnssTime, Result};

pub use mcd::{consistency_factor, fast_mcd, mcd_exact, reweight, FastMcdParams, McdResult, MCD_EXACT_MAX_N};

pub const ERROR_MODEL_FORMAT_VERSION: u32 = 1;

/// Identifies one fitted group. `class: None` pools all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorModelKey {
    pub class: Option<EnvironmentClass>,
    pub constellation: Constellation,
    pub band: Band,
}

impl std::fmt::Display for ErrorModelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let class = self.class.map_or("*", |c| c.name());
        write!(f, "{class}/{}/{}", self.constellation, self.band)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianErrorModel {
    pub mean_m: f64,
    /// Robust variance, m².
    pub var_m2: f64,
    pub classical_var_m2: f64,
    pub n: usize,
    pub h_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorGrouping {
    /// One model per (class, constellation, band).
    #[default]
    PerClass,
    /// One model per (constellation, band), classes pooled.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub grouping: ErrorGrouping,
    pub h_fraction: f64,
    pub min_samples: usize,
    pub reweight: bool,
    pub mcd: FastMcdParams,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grouping: ErrorGrouping::PerClass,
            h_fraction: 0.75,
            min_samples: 50,
            reweight: true,
            mcd: FastMcdParams::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h_fraction >= 0.5 && self.h_fraction <= 1.0) {
            return Err(Error::Config(format!("h_fraction {} outside [0.5, 1]", self.h_fraction)));
        }
        if self.min_samples < 3 {
            return Err(Error::Config("min_samples must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelSet {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub grouping: ErrorGrouping,
    /// Keyed by the display form of [`ErrorModelKey`].
    pub models: BTreeMap<String, GaussianErrorModel>,
    pub fallback: Option<GaussianErrorModel>,
    /// Groups left out for having fewer than the minimum samples.
    #[serde(default)]
    pub too_small: BTreeMap<String, usize>,
}

impl ErrorModelSet {
    pub fn key_for(&self, class: Option<EnvironmentClass>, constellation: Constellation, band: Band) -> ErrorModelKey {
        ErrorModelKey {
            class: match self.grouping {
                ErrorGrouping::PerClass => class,
                ErrorGrouping::Pooled => None,
            },
            constellation,
            band,
        }
    }

    pub fn get(&self, key: &ErrorModelKey) -> Option<&GaussianErrorModel> {
        self.models.get(&key.to_string())
    }

    /// The key's model, else the fallback.
    pub fn resolve(&self, class: Option<EnvironmentClass>, constellation: Constellation, band: Band) -> Result<&GaussianErrorModel> {
        let key = self.key_for(class, constellation, band);
        self.get(&key)
            .or(self.fallback.as_ref())
            .ok_or_else(|| Error::InvalidInput(format!("no error model for {key} and no fallback")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: Self = serde_json::from_str(&text)?;
        if set.format_version != ERROR_MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported error model format version {}", set.format_version)));
        }
        Ok(set)
    }
}

/// Robust 1-D Gaussian fit of `values` with the MCD.
pub fn fit_gaussian(values: &[f64], config: &FitConfig, seed: u64) -> Result<GaussianErrorModel> {
    let n = values.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 values, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let classical = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let h = ((config.h_fraction * n as f64).ceil() as usize).clamp(n.div_ceil(2) + 1, n);
    let points: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
    let (mean_m, var_m2) = if h == n {
        (mean, classical)
    } else {
        let mut r = fast_mcd(&points, h, seed, &config.mcd)?;
        if config.reweight {
            r = reweight(&points, &r)?;
        }
        (r.location[0], r.scatter[(0, 0)])
    };
    if !(var_m2 > 0.0) {
        return Err(Error::Numerical("robust variance is not positive".into()));
    }
    Ok(GaussianErrorModel { mean_m, var_m2, classical_var_m2: classical, n, h_fraction: config.h_fraction })
}

/// Fits one model per group with enough samples, plus a pooled fallback.
pub fn fit_error_models(samples: &[ResidualSample], config: &FitConfig, seed: u64) -> Result<ErrorModelSet> {
    config.validate()?;
    let mut groups: BTreeMap<ErrorModelKey, Vec<f64>> = BTreeMap::new();
    for s in samples {
        if config.grouping == ErrorGrouping::PerClass && s.class.is_none() {
            continue;
        }
        let key = ErrorModelKey {
            class: if config.grouping == ErrorGrouping::PerClass { s.class } else { None },
            constellation: s.satellite.constellation,
            band: s.band,
        };
        groups.entry(key).or_default().push(s.epsilon_m);
    }
    let (fit, small): (Vec<_>, Vec<_>) = groups.into_iter().partition(|(_, v)| v.len() >= config.min_samples);
    let models = fit
        .par_iter()
        .enumerate()
        .map(|(k, (key, v))| Ok((key.to_string(), fit_gaussian(v, config, seed.wrapping_add(k as u64))?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    if models.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no residual group reaches the minimum of {} samples",
            config.min_samples
        )));
    }
    let all: Vec<f64> = samples.iter().map(|s| s.epsilon_m).collect();
    let fallback = fit_gaussian(&all, config, seed.wrapping_sub(1))?;
    Ok(ErrorModelSet {
        format_version: ERROR_MODEL_FORMAT_VERSION,
        config_hash: None,
        grouping: config.grouping,
        models,
        fallback: Some(fallback),
        too_small: small.into_iter().map(|(k, v)| (k.to_string(), v.len())).collect(),
    })
}

/// One visible signal at one scheduled epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub satellite: SatelliteId,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEpoch {
    pub time: GnssTime,
    pub class: Option<EnvironmentClass>,
    pub signals: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub time: GnssTime,
    pub satellite: SatelliteId,
    pub band: Band,
    pub class: Option<EnvironmentClass>,
    /// `None` marks a no-signal row.
    pub error_m: Option<f64>,
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sub_seed(seed: u64, time: GnssTime, sat: SatelliteId, band: Band) -> u64 {
    let mut h = mix(seed);
    h = mix(h ^ time.week as u64);
    h = mix(h ^ time.sow.to_bits());
    h = mix(h ^ ((sat.constellation as u64) << 8 | u64::from(sat.prn)));
    mix(h ^ band as u64)
}

/// Independent normal draws per scheduled signal. Epochs whose class is in
/// `no_signal` produce marker rows instead.
pub fn sample_errors(models: &ErrorModelSet, schedule: &[ScheduleEpoch], seed: u64, no_signal: &[EnvironmentClass]) -> Result<Vec<ErrorSample>> {
    let per_epoch = schedule
        .par_iter()
        .map(|ep| {
            let silent = ep.class.is_some_and(|c| no_signal.contains(&c));
            ep.signals
                .iter()
                .map(|s| {
                    let error_m = if silent {
                        None
                    } else {
                        let m = models.resolve(ep.class, s.satellite.constellation, s.band)?;
                        let normal = Normal::new(m.mean_m, m.var_m2.max(0.0).sqrt())
                            .map_err(|e| Error::Numerical(format!("bad error model: {e}")))?;
                        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, ep.time, s.satellite, s.band));
                        Some(normal.sample(&mut rng))
                    };
                    Ok(ErrorSample { time: ep.time, satellite: s.satellite, band: s.band, class: ep.class, error_m })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_epoch.into_iter().flatten().collect())
}

pub fn write_errors_csv<W: Write>(writer: W, samples: &[ErrorSample], no_signal_marker: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["week", "sow", "sat", "band", "class", "error_m"])?;
    for s in samples {
        w.write_record([
            s.time.week.to_string(),
            s.time.sow.to_string(),
            s.satellite.to_string(),
            s.band.to_string(),
            s.class.map_or_else(|| "unlabeled".to_string(), |c| c.name().to_string()),
            s.error_m.map_or_else(|| no_signal_marker.to_string(), |v| v.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

/// Equal-width histogram over `[lo, hi)`; values outside are ignored.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidInput("histogram needs bins > 0 and hi > lo".into()));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        if *v >= lo && *v < hi {
            counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let n = values.len().max(1) as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect())
}

/// Histogram rows with the fitted normal density at each bin center.
pub fn write_histogram_csv<W: Write>(writer: W, bins: &[HistogramBin], model: &GaussianErrorModel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lo_m", "hi_m", "count", "density", "model_pdf"])?;
    let sd = model.var_m2.sqrt();
    for b in bins {
        let c = 0.5 * (b.lo + b.hi);
        let pdf = (-0.5 * ((c - model.mean_m) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string(), b.density.to_string(), pdf.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
