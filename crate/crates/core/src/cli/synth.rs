//! Synthetic railway journey: nominal GPS and Galileo shells, a parametric
//! track, per-class C/N0 signatures and Gaussian local errors. Every
//! pseudorange is built from the same modeled terms the residual stage
//! removes, so extraction must return the injected errors.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::context::EnvironmentClass;
use crate::errormodel::ErrorSample;
use crate::geodesy::constants::{GM_GAL, GM_GPS, WGS84_A};
use crate::geodesy::{geodetic_to_ecef, EphemerisStore, Geodetic};
use crate::ingest::{
    format_rinex_nav, parse_nav_str, BroadcastEphemeris, Constellation, IonoParams, LabelInterval, LabelTimeline,
    NavData, ObservationEpoch, SatSignalObservation, SatelliteId, TruthSample,
};
use crate::residuals::{signal_terms, Receiver};
use crate::{Error, GnssTime, Result};

/// Spacing of broadcast records, seconds.
const RECORD_SPACING: f64 = 7200.0;
const CN0_LIMITS: (f64, f64) = (15.0, 60.0);

/// One pass over the repeating pattern: (class, epochs).
pub const JOURNEY_PATTERN: [(EnvironmentClass, usize); 7] = [
    (EnvironmentClass::Station, 250),
    (EnvironmentClass::MixedBuildingsOpenSky, 175),
    (EnvironmentClass::Buildings, 37),
    (EnvironmentClass::MixedTreesBuildings, 175),
    (EnvironmentClass::Trees, 38),
    (EnvironmentClass::MixedTreesOpenSky, 175),
    (EnvironmentClass::OpenSkyRural, 50),
];

/// Received signal and local error behaviour of one homogeneous environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSignature {
    pub cn0_zenith_dbhz: f64,
    pub cn0_horizon_dbhz: f64,
    pub cn0_sd_db: f64,
    /// Satellites below this elevation are blocked.
    pub mask_elevation_deg: f64,
    pub error_var_m2: f64,
}

pub fn signature(class: EnvironmentClass) -> ClassSignature {
    let (zenith, horizon, sd, mask, var) = match class {
        EnvironmentClass::OpenSkyRural => (49.0, 40.0, 1.0, 5.0, 2.0),
        EnvironmentClass::OpenSkyUrban => (47.0, 37.0, 2.0, 10.0, 4.0),
        EnvironmentClass::Station => (44.0, 33.0, 3.0, 8.0, 7.7),
        EnvironmentClass::Trees => (39.0, 27.0, 5.0, 10.0, 12.0),
        EnvironmentClass::Buildings => (42.0, 25.0, 4.0, 15.0, 20.0),
        EnvironmentClass::Triage => (45.0, 35.0, 2.5, 10.0, 6.0),
        EnvironmentClass::Bridge | EnvironmentClass::PostBridge => (43.0, 33.0, 3.5, 12.0, 9.0),
        EnvironmentClass::Tunnel => (0.0, 0.0, 0.0, 90.0, 0.0),
        EnvironmentClass::PostTunnel => (40.0, 30.0, 4.0, 15.0, 15.0),
        mixed => {
            let (a, b) = sides(mixed).expect("mixed class");
            let (a, b) = (signature(a), signature(b));
            return ClassSignature {
                cn0_zenith_dbhz: 0.5 * (a.cn0_zenith_dbhz + b.cn0_zenith_dbhz),
                cn0_horizon_dbhz: 0.5 * (a.cn0_horizon_dbhz + b.cn0_horizon_dbhz),
                cn0_sd_db: 0.5 * (a.cn0_sd_db + b.cn0_sd_db),
                mask_elevation_deg: 0.5 * (a.mask_elevation_deg + b.mask_elevation_deg),
                error_var_m2: 0.5 * (a.error_var_m2 + b.error_var_m2),
            };
        }
    };
    ClassSignature {
        cn0_zenith_dbhz: zenith,
        cn0_horizon_dbhz: horizon,
        cn0_sd_db: sd,
        mask_elevation_deg: mask,
        error_var_m2: var,
    }
}

/// The two sides of a mixed class: azimuths in `[0, pi)` see the first.
pub fn sides(class: EnvironmentClass) -> Option<(EnvironmentClass, EnvironmentClass)> {
    match class {
        EnvironmentClass::MixedTreesOpenSky => Some((EnvironmentClass::Trees, EnvironmentClass::OpenSkyRural)),
        EnvironmentClass::MixedTreesBuildings => Some((EnvironmentClass::Trees, EnvironmentClass::Buildings)),
        EnvironmentClass::MixedBuildingsOpenSky => Some((EnvironmentClass::Buildings, EnvironmentClass::OpenSkyRural)),
        _ => None,
    }
}

fn local_signature(class: EnvironmentClass, azimuth: f64) -> ClassSignature {
    match sides(class) {
        Some((a, b)) => signature(if azimuth < PI { a } else { b }),
        None => signature(class),
    }
}

/// Generator error model of one class. Mixed classes report the average of
/// their two sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub mean_m: f64,
    pub var_m2: f64,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModels {
    pub config_hash: String,
    pub zero_error: bool,
    pub models: BTreeMap<String, TruthModel>,
}

#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub epochs: Vec<ObservationEpoch>,
    pub truth: Vec<TruthSample>,
    pub labels: LabelTimeline,
    /// Navigation data as re-read from the written RINEX text.
    pub nav: NavData,
    pub nav_text: String,
    /// Receiver clock per epoch, m.
    pub clock_m: Vec<f64>,
    /// Injected local error of every observed signal.
    pub injected: Vec<ErrorSample>,
    pub truth_models: TruthModels,
}

pub fn klobuchar_coefficients() -> IonoParams {
    IonoParams {
        alpha: [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8],
        beta: [9.0112e4, 0.0, -1.9661e5, -6.5536e4],
    }
}

struct Shell {
    constellation: Constellation,
    planes: u8,
    per_plane: u8,
    inclination_deg: f64,
    sqrt_a: f64,
    gm: f64,
    tgd: f64,
}

const SHELLS: [Shell; 2] = [
    Shell {
        constellation: Constellation::Gps,
        planes: 6,
        per_plane: 5,
        inclination_deg: 55.0,
        sqrt_a: 5153.7,
        gm: GM_GPS,
        tgd: -4.0e-9,
    },
    Shell {
        constellation: Constellation::Galileo,
        planes: 3,
        per_plane: 8,
        inclination_deg: 56.0,
        sqrt_a: 5440.6,
        gm: GM_GAL,
        tgd: 2.5e-9,
    },
];

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(TAU) - PI
}

/// Nominal Keplerian shells with records every two hours around the span.
pub fn shell_ephemerides(start: GnssTime, span_s: f64) -> Vec<BroadcastEphemeris> {
    let first = ((start.total_seconds() - RECORD_SPACING) / RECORD_SPACING).floor() * RECORD_SPACING;
    let t0 = GnssTime::new(0, first);
    let records = (span_s / RECORD_SPACING).ceil() as usize + 3;
    let omega_dot = -8.0e-9;
    let mut out = Vec::new();
    for shell in &SHELLS {
        let n0 = (shell.gm / shell.sqrt_a.powi(6)).sqrt();
        let delta_n = 4.0e-9;
        for p in 0..shell.planes {
            for s in 0..shell.per_plane {
                let prn = p * shell.per_plane + s + 1;
                let k = f64::from(prn);
                let omega0 = f64::from(p) * TAU / f64::from(shell.planes) + 0.35;
                let m0 = f64::from(s) * TAU / f64::from(shell.per_plane) + f64::from(p) * 0.26;
                let af0 = 2.0e-5 * ((k * 0.7).sin());
                let af1 = 1.0e-12 * ((k * 1.3).cos());
                for j in 0..records {
                    let dt = j as f64 * RECORD_SPACING;
                    let toe = t0.add_seconds(dt);
                    out.push(BroadcastEphemeris {
                        satellite: SatelliteId::new(shell.constellation, prn),
                        toc: toe,
                        toe,
                        sqrt_a: shell.sqrt_a,
                        e: 0.002 + 2.0e-4 * k,
                        i0: shell.inclination_deg.to_radians(),
                        omega0: wrap_pi(omega0 + omega_dot * dt),
                        omega: 0.4,
                        m0: wrap_pi(m0 + (n0 + delta_n) * dt),
                        delta_n,
                        i_dot: 0.0,
                        omega_dot,
                        cuc: 0.0,
                        cus: 0.0,
                        crc: 0.0,
                        crs: 0.0,
                        cic: 0.0,
                        cis: 0.0,
                        af0: af0 + af1 * dt,
                        af1,
                        af2: 0.0,
                        tgd: shell.tgd * (1.0 + 0.05 * (k * 0.9).sin()),
                        health: 0,
                        iode: j as f64,
                    });
                }
            }
        }
    }
    out
}

/// Gently curving track starting at the configured point.
pub fn track_position(cfg: &PipelineConfig, seconds: f64) -> crate::geodesy::EcefPosition {
    let s = &cfg.synth;
    let dist = s.speed_m_per_s * seconds;
    let heading = 0.6f64;
    let east = dist * heading.cos();
    let north = dist * heading.sin() + 300.0 * (TAU * dist / 6000.0).sin();
    let lat0 = s.latitude_deg.to_radians();
    geodetic_to_ecef(&Geodetic {
        lat: lat0 + north / WGS84_A,
        lon: s.longitude_deg.to_radians() + east / (WGS84_A * lat0.cos()),
        height: s.height_m + 10.0 * (dist / 5000.0).sin(),
    })
}

/// Class of every epoch, cycling over [`JOURNEY_PATTERN`].
pub fn epoch_classes(epochs: usize) -> Vec<EnvironmentClass> {
    JOURNEY_PATTERN
        .iter()
        .flat_map(|&(c, n)| std::iter::repeat_n(c, n))
        .cycle()
        .take(epochs)
        .collect()
}

fn label_timeline(times: &[GnssTime], end: GnssTime, classes: &[EnvironmentClass]) -> Result<LabelTimeline> {
    let mut intervals = Vec::new();
    let mut k = 0;
    while k < classes.len() {
        let mut j = k;
        while j < classes.len() && classes[j] == classes[k] {
            j += 1;
        }
        intervals.push(LabelInterval {
            start: times[k],
            end: times.get(j).copied().unwrap_or(end),
            class: classes[k],
        });
        k = j;
    }
    LabelTimeline::new(intervals)
}

struct EpochDraw {
    observations: Vec<SatSignalObservation>,
    injected: Vec<ErrorSample>,
}

/// Builds the full scenario described by `cfg.synth`.
pub fn generate(cfg: &PipelineConfig) -> Result<SyntheticScenario> {
    cfg.validate()?;
    let s = &cfg.synth;
    let start = GnssTime::new(s.start_week, s.start_sow);
    let times: Vec<GnssTime> = (0..s.epochs).map(|k| start.add_seconds(k as f64)).collect();
    let end = start.add_seconds(s.epochs as f64);

    let iono_in = klobuchar_coefficients();
    let nav_text = format_rinex_nav(&shell_ephemerides(start, s.epochs as f64), Some(&iono_in));
    let nav = parse_nav_str(&nav_text, Path::new("<synthetic nav>"))?;
    let iono = nav.iono.ok_or_else(|| Error::Numerical("synthetic nav lost its iono coefficients".into()))?;
    let store = EphemerisStore::new(nav.ephemerides.iter().cloned());
    let satellites: Vec<SatelliteId> = store.satellites().collect();

    let truth: Vec<TruthSample> = times
        .iter()
        .enumerate()
        .map(|(k, &time)| TruthSample { time, position: track_position(cfg, k as f64) })
        .collect();
    let classes = epoch_classes(s.epochs);
    let labels = label_timeline(&times, end, &classes)?;
    let clock_m: Vec<f64> = (0..s.epochs).map(|k| s.clock_offset_m + s.clock_drift_m_per_s * k as f64).collect();

    let rcfg = cfg.residual_config();
    let draws = (0..s.epochs)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            let receiver = Receiver::new(truth[k].position)?;
            let class = classes[k];
            let mut draw = EpochDraw { observations: Vec::new(), injected: Vec::new() };
            for &sat in &satellites {
                let bands: Vec<_> = cfg.signals.iter().filter(|g| g.constellation == sat.constellation).map(|g| g.band).collect();
                for band in bands {
                    let Some(terms) = signal_terms(sat, band, times[k], &receiver, &store, Some(&iono), &rcfg)? else {
                        continue;
                    };
                    let sig = local_signature(class, terms.azimuth);
                    if terms.elevation < sig.mask_elevation_deg.to_radians() {
                        continue;
                    }
                    let mean_cn0 = sig.cn0_horizon_dbhz
                        + (sig.cn0_zenith_dbhz - sig.cn0_horizon_dbhz) * (terms.elevation / FRAC_PI_2).sin();
                    let cn0 = (mean_cn0 + sig.cn0_sd_db * rng.sample::<f64, _>(rand_distr::StandardNormal))
                        .clamp(CN0_LIMITS.0, CN0_LIMITS.1);
                    let error_m = if s.zero_error {
                        0.0
                    } else {
                        Normal::new(0.0, sig.error_var_m2.sqrt())
                            .map_err(|e| Error::Numerical(e.to_string()))?
                            .sample(&mut rng)
                    };
                    let isb = if sat.constellation == Constellation::Galileo { s.galileo_bias_m } else { 0.0 };
                    draw.observations.push(SatSignalObservation {
                        satellite: sat,
                        band,
                        pseudorange_m: terms.modeled_without_clock() + clock_m[k] + isb + error_m,
                        cn0_dbhz: Some((cn0 * 100.0).round() / 100.0),
                    });
                    draw.injected.push(ErrorSample {
                        time: times[k],
                        satellite: sat,
                        band,
                        class: Some(class),
                        error_m: Some(error_m),
                    });
                }
            }
            Ok(draw)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut epochs = Vec::with_capacity(s.epochs);
    let mut injected = Vec::new();
    for (k, d) in draws.into_iter().enumerate() {
        epochs.push(ObservationEpoch { time: times[k], observations: d.observations });
        injected.extend(d.injected);
    }

    let mut models = BTreeMap::new();
    for &(class, _) in &JOURNEY_PATTERN {
        let n = classes.iter().filter(|&&c| c == class).count();
        let var = if s.zero_error { 0.0 } else { signature(class).error_var_m2 };
        models.insert(class.name().to_string(), TruthModel { mean_m: 0.0, var_m2: var, epochs: n });
    }
    Ok(SyntheticScenario {
        epochs,
        truth,
        labels,
        nav,
        nav_text,
        clock_m,
        injected,
        truth_models: TruthModels { config_hash: cfg.hash(), zero_error: s.zero_error, models },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::{ecef_to_geodetic, geometric_range};

    fn small() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.synth.epochs = 60;
        cfg
    }

    #[test]
    fn pattern_totals() {
        let classes = epoch_classes(7200);
        let count = |c| classes.iter().filter(|&&x| x == c).count();
        assert_eq!(count(EnvironmentClass::Station), 2000);
        assert_eq!(count(EnvironmentClass::Buildings), 296);
        assert_eq!(count(EnvironmentClass::Trees), 304);
        assert_eq!(count(EnvironmentClass::OpenSkyRural), 400);
        assert_eq!(classes.iter().filter(|c| c.is_clear()).count(), 3000);
    }

    #[test]
    fn track_is_a_train() {
        let cfg = PipelineConfig::default();
        for k in 0..200 {
            let t = k as f64 * 37.0;
            let v = track_position(&cfg, t + 1.0).distance(&track_position(&cfg, t));
            assert!(v > 20.0 && v < 35.0, "{v}");
            let g = ecef_to_geodetic(&track_position(&cfg, t)).unwrap();
            assert!((g.height - 220.0).abs() <= 10.0 + 1e-6);
        }
    }

    #[test]
    fn nav_round_trip_keeps_shells() {
        let scen = generate(&small()).unwrap();
        let sats: std::collections::BTreeSet<_> = scen.nav.ephemerides.iter().map(|e| e.satellite).collect();
        assert_eq!(sats.len(), 54);
        for e in &scen.nav.ephemerides {
            assert!((e.sqrt_a - 5153.7).abs() < 1e-6 || (e.sqrt_a - 5440.6).abs() < 1e-6);
        }
        // consecutive records describe the same orbit
        let store = EphemerisStore::new(scen.nav.ephemerides.iter().cloned());
        let sat = SatelliteId::new(Constellation::Gps, 3);
        let recs: Vec<_> = scen.nav.ephemerides.iter().filter(|e| e.satellite == sat).collect();
        let mid = recs[1].toe.add_seconds(RECORD_SPACING / 2.0);
        let rx = track_position(&small(), 0.0);
        let a = geometric_range(&rx, mid, recs[1]).unwrap().range_m;
        let b = geometric_range(&rx, mid, recs[2]).unwrap().range_m;
        assert!((a - b).abs() < 1e-3, "{}", a - b);
        assert!(store.select(sat, mid).is_ok());
    }

    #[test]
    fn visible_counts_and_determinism() {
        let cfg = small();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.epochs, b.epochs);
        for e in &a.epochs {
            let n = e.satellites().len();
            assert!((8..=30).contains(&n), "{n} satellites");
        }
        assert_eq!(a.injected.len(), a.epochs.iter().map(|e| e.observations.len()).sum::<usize>());
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(generate(&other).unwrap().epochs, a.epochs);
    }

    #[test]
    fn zero_error_has_no_injection() {
        let mut cfg = small();
        cfg.synth.zero_error = true;
        let scen = generate(&cfg).unwrap();
        assert!(scen.injected.iter().all(|s| s.error_m == Some(0.0)));
        assert!(scen.truth_models.models.values().all(|m| m.var_m2 == 0.0));
    }
}
