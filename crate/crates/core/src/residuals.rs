//! Pseudorange decomposition into modeled terms and a local error.
//!
//! For each signal the geometric range, satellite clock, group delay,
//! troposphere and ionosphere are removed from the pseudorange. The receiver
//! clock is then estimated per epoch as the median of what is left, and the
//! remainder is the local error.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atmosphere::{klobuchar_delay, TropoModel, MIN_TROPO_ELEVATION};
use crate::context::{EnvironmentClass, EpochGeometry};
use crate::geodesy::constants::C;
use crate::geodesy::{ecef_to_geodetic, geometric_range, EcefPosition, EphemerisStore, Geodetic};
use crate::ingest::{AlignedEpoch, Band, Constellation, IonoParams, ObservationEpoch, SatelliteId};
use crate::{Error, GnssTime, Result};

/// Records with |ε| at or above this are flagged as outliers (and kept).
pub const OUTLIER_THRESHOLD_M: f64 = 1000.0;
const CLOCK_TOL_M: f64 = 1e-7;
const MAX_CLOCK_PASSES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IonoPolicy {
    /// Missing Klobuchar coefficients are an error.
    #[default]
    Require,
    /// Missing Klobuchar coefficients mean no ionospheric correction.
    ZeroIfAbsent,
}

/// Which signals share one receiver clock estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClockGrouping {
    Joint,
    PerConstellation,
    #[default]
    PerConstellationBand,
}

/// Instant at which satellite geometry is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceptionTime {
    /// The receiver time tag as recorded.
    #[default]
    Tag,
    /// The time tag corrected by the estimated receiver clock, iterated.
    ClockCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResidualConfig {
    /// Radians.
    pub elevation_cutoff: f64,
    pub tropo: Option<TropoModel>,
    pub iono_policy: IonoPolicy,
    pub clock_grouping: ClockGrouping,
    pub reception_time: ReceptionTime,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            elevation_cutoff: 5f64.to_radians(),
            tropo: Some(TropoModel::default()),
            iono_policy: IonoPolicy::Require,
            clock_grouping: ClockGrouping::PerConstellationBand,
            reception_time: ReceptionTime::Tag,
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.elevation_cutoff) {
            return Err(Error::Config(format!("elevation cutoff {} rad out of range", self.elevation_cutoff)));
        }
        if self.tropo.is_some() && self.elevation_cutoff <= MIN_TROPO_ELEVATION {
            return Err(Error::Config("elevation cutoff must exceed 2 degrees when the tropospheric model is on".into()));
        }
        Ok(())
    }
}

/// Key of one receiver clock estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClockGroup {
    pub constellation: Option<Constellation>,
    pub band: Option<Band>,
}

impl ClockGroup {
    pub fn of(grouping: ClockGrouping, satellite: SatelliteId, band: Band) -> Self {
        match grouping {
            ClockGrouping::Joint => Self { constellation: None, band: None },
            ClockGrouping::PerConstellation => Self { constellation: Some(satellite.constellation), band: None },
            ClockGrouping::PerConstellationBand => Self { constellation: Some(satellite.constellation), band: Some(band) },
        }
    }
}

/// Modeled terms of one signal, all in meters except angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalTerms {
    pub range_m: f64,
    pub sat_clock_m: f64,
    pub tgd_m: f64,
    pub tropo_m: f64,
    pub iono_m: f64,
    pub elevation: f64,
    pub azimuth: f64,
}

impl SignalTerms {
    /// Pseudorange minus the receiver clock and local error.
    pub fn modeled_without_clock(&self) -> f64 {
        self.range_m - self.sat_clock_m + self.tgd_m + self.tropo_m + self.iono_m
    }
}

/// Receiver position at one epoch with its geodetic coordinates cached.
#[derive(Debug, Clone, Copy)]
pub struct Receiver {
    pub position: EcefPosition,
    pub geodetic: Geodetic,
}

impl Receiver {
    pub fn new(position: EcefPosition) -> Result<Self> {
        Ok(Self { position, geodetic: ecef_to_geodetic(&position)? })
    }
}

/// Evaluates every modeled term for one signal received at `reception`.
/// Returns `Ok(None)` when the satellite is below the cutoff.
pub fn signal_terms(
    satellite: SatelliteId,
    band: Band,
    reception: GnssTime,
    receiver: &Receiver,
    ephemerides: &EphemerisStore,
    iono: Option<&IonoParams>,
    config: &ResidualConfig,
) -> Result<Option<SignalTerms>> {
    let eph = ephemerides.select(satellite, reception)?;
    let sol = geometric_range(&receiver.position, reception, eph)?;
    if sol.azel.elevation < config.elevation_cutoff {
        return Ok(None);
    }
    let tropo_m = match &config.tropo {
        Some(model) => model.slant_delay(sol.azel, receiver.geodetic.height)?,
        None => 0.0,
    };
    let iono_m = match (iono, config.iono_policy) {
        (None, IonoPolicy::ZeroIfAbsent) => 0.0,
        _ => klobuchar_delay(
            iono,
            receiver.geodetic.lat,
            receiver.geodetic.lon,
            sol.azel,
            reception.sow,
            band.frequency_hz(),
        )?,
    };
    Ok(Some(SignalTerms {
        range_m: sol.range_m,
        sat_clock_m: C * sol.state.clock_offset,
        tgd_m: C * eph.tgd * band.l1_scale(),
        tropo_m,
        iono_m,
        elevation: sol.azel.elevation,
        azimuth: sol.azel.azimuth,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub time: GnssTime,
    pub satellite: SatelliteId,
    pub band: Band,
    pub epsilon_m: f64,
    pub pseudorange_m: f64,
    pub range_m: f64,
    pub rx_clock_m: f64,
    pub sat_clock_m: f64,
    pub tgd_m: f64,
    pub tropo_m: f64,
    pub iono_m: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub cn0_dbhz: Option<f64>,
    pub outlier: bool,
    pub class: Option<EnvironmentClass>,
}

impl ResidualRecord {
    /// `R - (ρ + clock - sat + tgd + tropo + iono + ε)`, evaluated with the
    /// large range difference taken first so it is exact.
    pub fn closure_error(&self) -> f64 {
        (self.pseudorange_m - self.range_m)
            - (self.rx_clock_m - self.sat_clock_m + self.tgd_m + self.tropo_m + self.iono_m + self.epsilon_m)
    }

    pub fn sample(&self) -> ResidualSample {
        ResidualSample {
            time: self.time,
            satellite: self.satellite,
            band: self.band,
            epsilon_m: self.epsilon_m,
            elevation: self.elevation,
            azimuth: self.azimuth,
            cn0_dbhz: self.cn0_dbhz,
            class: self.class,
        }
    }
}

/// The subset of a residual record stored in `residuals.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub time: GnssTime,
    pub satellite: SatelliteId,
    pub band: Band,
    pub epsilon_m: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub cn0_dbhz: Option<f64>,
    pub class: Option<EnvironmentClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochResiduals {
    pub time: GnssTime,
    /// Clock of the first group in key order.
    pub rx_clock_m: f64,
    pub group_clocks: BTreeMap<ClockGroup, f64>,
    pub records: Vec<ResidualRecord>,
    /// Distinct satellites contributing records.
    pub satellite_count: usize,
    pub missing_ephemeris: usize,
    pub below_cutoff: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NoUsableSatellites,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EpochOutcome {
    Processed(EpochResiduals),
    Skipped(SkipReason),
}

/// Median of the raw residuals.
pub fn estimate_receiver_clock(raw: &[f64]) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::InvalidInput("receiver clock needs at least one residual".into()));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite raw residual".into()));
    }
    let mut v = raw.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Decomposes every configured signal of one epoch.
pub fn epoch_residuals(
    epoch: &ObservationEpoch,
    ephemerides: &EphemerisStore,
    truth: &EcefPosition,
    iono: Option<&IonoParams>,
    config: &ResidualConfig,
) -> Result<EpochOutcome> {
    if iono.is_none() && config.iono_policy == IonoPolicy::Require {
        return Err(Error::InvalidInput(
            "navigation data has no Klobuchar coefficients and the iono policy is 'require'".into(),
        ));
    }
    let receiver = Receiver::new(*truth)?;
    let mut clocks: BTreeMap<ClockGroup, f64> = BTreeMap::new();
    let passes = match config.reception_time {
        ReceptionTime::Tag => 1,
        ReceptionTime::ClockCorrected => MAX_CLOCK_PASSES,
    };

    for pass in 0..passes {
        let mut missing_ephemeris = 0;
        let mut below_cutoff = 0;
        let mut used = Vec::new();
        for obs in &epoch.observations {
            let group = ClockGroup::of(config.clock_grouping, obs.satellite, obs.band);
            let reception = epoch.time.add_seconds(-clocks.get(&group).copied().unwrap_or(0.0) / C);
            match signal_terms(obs.satellite, obs.band, reception, &receiver, ephemerides, iono, config) {
                Ok(Some(terms)) => used.push((obs, group, terms)),
                Ok(None) => below_cutoff += 1,
                Err(Error::NoEphemeris { .. }) => missing_ephemeris += 1,
                Err(e) => return Err(e),
            }
        }
        if used.is_empty() {
            return Ok(EpochOutcome::Skipped(SkipReason::NoUsableSatellites));
        }

        let raw: Vec<f64> = used
            .iter()
            .map(|(obs, _, t)| (obs.pseudorange_m - t.range_m) + t.sat_clock_m - t.tgd_m - t.tropo_m - t.iono_m)
            .collect();
        let mut grouped: BTreeMap<ClockGroup, Vec<f64>> = BTreeMap::new();
        for ((_, g, _), r) in used.iter().zip(&raw) {
            grouped.entry(*g).or_default().push(*r);
        }
        let new_clocks = grouped
            .iter()
            .map(|(g, v)| Ok((*g, estimate_receiver_clock(v)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let converged = pass + 1 == passes
            || new_clocks
                .iter()
                .all(|(g, c)| clocks.get(g).is_some_and(|old| (old - c).abs() < CLOCK_TOL_M));
        if !converged {
            clocks = new_clocks;
            continue;
        }

        let records: Vec<ResidualRecord> = used
            .iter()
            .zip(&raw)
            .map(|((obs, g, t), r)| {
                let rx_clock_m = new_clocks[g];
                let epsilon_m = r - rx_clock_m;
                ResidualRecord {
                    time: epoch.time,
                    satellite: obs.satellite,
                    band: obs.band,
                    epsilon_m,
                    pseudorange_m: obs.pseudorange_m,
                    range_m: t.range_m,
                    rx_clock_m,
                    sat_clock_m: t.sat_clock_m,
                    tgd_m: t.tgd_m,
                    tropo_m: t.tropo_m,
                    iono_m: t.iono_m,
                    elevation: t.elevation,
                    azimuth: t.azimuth,
                    cn0_dbhz: obs.cn0_dbhz,
                    outlier: epsilon_m.abs() >= OUTLIER_THRESHOLD_M,
                    class: None,
                }
            })
            .collect();
        let mut sats: Vec<_> = records.iter().map(|r| r.satellite).collect();
        sats.dedup();
        sats.sort();
        sats.dedup();
        return Ok(EpochOutcome::Processed(EpochResiduals {
            time: epoch.time,
            rx_clock_m: *new_clocks.values().next().expect("non-empty"),
            group_clocks: new_clocks,
            records,
            satellite_count: sats.len(),
            missing_ephemeris,
            below_cutoff,
        }));
    }
    Err(Error::Numerical(format!("receiver clock iteration did not converge at {}", epoch.time)))
}

/// Azimuth/elevation of every satellite of an epoch with a usable ephemeris.
pub fn epoch_geometry(epoch: &ObservationEpoch, ephemerides: &EphemerisStore, truth: &EcefPosition) -> Result<EpochGeometry> {
    let receiver = Receiver::new(*truth)?;
    let mut geo = EpochGeometry::new();
    for sat in epoch.satellites() {
        let eph = match ephemerides.select(sat, epoch.time) {
            Ok(e) => e,
            Err(Error::NoEphemeris { .. }) => continue,
            Err(e) => return Err(e),
        };
        geo.insert(sat, geometric_range(&receiver.position, epoch.time, eph)?.azel);
    }
    Ok(geo)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub epochs_processed: usize,
    pub epochs_skipped: BTreeMap<SkipReason, usize>,
    pub records: usize,
    pub outliers: usize,
    pub missing_ephemeris: usize,
    pub below_cutoff: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ResidualDataset {
    pub epochs: Vec<EpochResiduals>,
    pub report: ResidualReport,
}

impl ResidualDataset {
    pub fn records(&self) -> impl Iterator<Item = &ResidualRecord> {
        self.epochs.iter().flat_map(|e| e.records.iter())
    }
}

/// Runs [`epoch_residuals`] over an aligned journey, carrying labels.
pub fn residual_dataset(
    journey: &[AlignedEpoch],
    ephemerides: &EphemerisStore,
    iono: Option<&IonoParams>,
    config: &ResidualConfig,
) -> Result<ResidualDataset> {
    config.validate()?;
    let outcomes = journey
        .par_iter()
        .map(|a| epoch_residuals(&a.epoch, ephemerides, &a.truth, iono, config).map(|o| (o, a.class)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = ResidualDataset::default();
    for (outcome, class) in outcomes {
        match outcome {
            EpochOutcome::Processed(mut e) => {
                for r in &mut e.records {
                    r.class = class;
                }
                out.report.epochs_processed += 1;
                out.report.records += e.records.len();
                out.report.outliers += e.records.iter().filter(|r| r.outlier).count();
                out.report.missing_ephemeris += e.missing_ephemeris;
                out.report.below_cutoff += e.below_cutoff;
                out.epochs.push(e);
            }
            EpochOutcome::Skipped(reason) => *out.report.epochs_skipped.entry(reason).or_default() += 1,
        }
    }
    Ok(out)
}

const UNLABELED: &str = "unlabeled";

pub fn write_residuals_csv<'a, W: Write>(writer: W, records: impl IntoIterator<Item = &'a ResidualSample>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["week", "sow", "sat", "band", "epsilon_m", "elev_rad", "az_rad", "cn0_dbhz", "class"])?;
    for r in records {
        w.write_record([
            r.time.week.to_string(),
            r.time.sow.to_string(),
            r.satellite.to_string(),
            r.band.to_string(),
            r.epsilon_m.to_string(),
            r.elevation.to_string(),
            r.azimuth.to_string(),
            r.cn0_dbhz.map(|v| v.to_string()).unwrap_or_default(),
            r.class.map(|c| c.name().to_string()).unwrap_or_else(|| UNLABELED.into()),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_residuals_csv<R: Read>(reader: R, path: &Path) -> Result<Vec<ResidualSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        if rec.len() != 9 {
            return Err(Error::parse(path, line, format!("expected 9 fields, found {}", rec.len())));
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::parse(path, line, format!("bad {what} '{}'", &rec[i])))
        };
        let week = rec[0].parse().map_err(|_| Error::parse(path, line, "bad week"))?;
        let class = match &rec[8] {
            "" | UNLABELED => None,
            s => Some(s.parse().map_err(|_| Error::parse(path, line, format!("unknown environment class '{s}'")))?),
        };
        out.push(ResidualSample {
            time: GnssTime::new(week, num(1, "sow")?),
            satellite: rec[2].parse().map_err(|_| Error::parse(path, line, "bad satellite"))?,
            band: rec[3].parse().map_err(|_| Error::parse(path, line, "bad band"))?,
            epsilon_m: num(4, "epsilon")?,
            elevation: num(5, "elevation")?,
            azimuth: num(6, "azimuth")?,
            cn0_dbhz: if rec[7].is_empty() { None } else { Some(num(7, "cn0")?) },
            class,
        });
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geodesy::{geodetic_to_ecef, satellite_state};
    use crate::ingest::{BroadcastEphemeris, SatSignalObservation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A ring of near-circular GPS orbits, visible from the test receiver.
    pub(crate) fn constellation(toe: GnssTime) -> Vec<BroadcastEphemeris> {
        (0..24u8)
            .map(|k| BroadcastEphemeris {
                satellite: SatelliteId::new(Constellation::Gps, k + 1),
                toc: toe,
                toe,
                sqrt_a: 5153.7,
                e: 0.005 + 1e-4 * f64::from(k),
                i0: 0.96,
                omega0: f64::from(k / 4) * std::f64::consts::PI / 3.0,
                omega: 0.3,
                m0: f64::from(k % 4) * std::f64::consts::FRAC_PI_2 + 0.2 * f64::from(k / 4),
                delta_n: 4.5e-9,
                i_dot: 1e-10,
                omega_dot: -8e-9,
                cuc: 1e-6,
                cus: 5e-6,
                crc: 200.0,
                crs: 20.0,
                cic: 1e-7,
                cis: -1e-7,
                af0: 1e-4 * (f64::from(k) - 12.0),
                af1: 1e-12,
                af2: 0.0,
                tgd: -5e-9,
                health: 0,
                iode: 1.0,
            })
            .collect()
    }

    pub(crate) fn iono() -> IonoParams {
        IonoParams {
            alpha: [1.1176e-8, 7.4506e-9, -5.9605e-8, -5.9605e-8],
            beta: [9.0112e4, 0.0, -1.9661e5, -6.5536e4],
        }
    }

    fn receiver() -> EcefPosition {
        geodetic_to_ecef(&Geodetic { lat: 48.85f64.to_radians(), lon: 2.35f64.to_radians(), height: 60.0 })
    }

    /// Forward model: every visible satellite with injected error `eps(k)`.
    fn synth_epoch(time: GnssTime, clock_m: f64, store: &EphemerisStore, eps: impl Fn(usize) -> f64) -> ObservationEpoch {
        let rx = Receiver::new(receiver()).unwrap();
        let cfg = ResidualConfig::default();
        let io = iono();
        let mut obs = Vec::new();
        for sat in store.satellites() {
            if let Some(t) = signal_terms(sat, Band::L1, time, &rx, store, Some(&io), &cfg).unwrap() {
                let k = obs.len();
                obs.push(SatSignalObservation {
                    satellite: sat,
                    band: Band::L1,
                    pseudorange_m: t.modeled_without_clock() + clock_m + eps(k),
                    cn0_dbhz: Some(45.0),
                });
            }
        }
        ObservationEpoch { time, observations: obs }
    }

    fn processed(o: EpochOutcome) -> EpochResiduals {
        match o {
            EpochOutcome::Processed(e) => e,
            EpochOutcome::Skipped(r) => panic!("skipped: {r:?}"),
        }
    }

    fn setup() -> (GnssTime, EphemerisStore) {
        let toe = GnssTime::new(2200, 86_400.0);
        (toe.add_seconds(600.0), EphemerisStore::new(constellation(toe)))
    }

    #[test]
    fn median_examples() {
        assert_eq!(estimate_receiver_clock(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert_eq!(estimate_receiver_clock(&[5.0, 5.0, 5.0, 500.0]).unwrap(), 5.0);
        assert!(estimate_receiver_clock(&[]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..40 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
            // brute force: the value with as many strictly below as above
            let mut s = v.clone();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let want = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
            assert_eq!(estimate_receiver_clock(&v).unwrap(), want);
        }
    }

    #[test]
    fn zero_error_recovery_and_closure() {
        let (t, store) = setup();
        let ep = synth_epoch(t, 12_345.678, &store, |_| 0.0);
        assert!(ep.observations.len() >= 5);
        let res = processed(epoch_residuals(&ep, &store, &receiver(), Some(&iono()), &ResidualConfig::default()).unwrap());
        assert!((res.rx_clock_m - 12_345.678).abs() < 1e-6);
        for r in &res.records {
            assert!(r.epsilon_m.abs() < 1e-6, "{}", r.epsilon_m);
            assert!(r.closure_error().abs() < 1e-9);
            assert!(!r.outlier);
        }
    }

    #[test]
    fn common_bias_goes_to_clock() {
        let (t, store) = setup();
        let cfg = ResidualConfig::default();
        let base = processed(epoch_residuals(&synth_epoch(t, 0.0, &store, |k| k as f64 * 0.7 - 2.0), &store, &receiver(), Some(&iono()), &cfg).unwrap());
        let mut shifted = synth_epoch(t, 0.0, &store, |k| k as f64 * 0.7 - 2.0);
        for o in &mut shifted.observations {
            o.pseudorange_m += 299.792458;
        }
        let sh = processed(epoch_residuals(&shifted, &store, &receiver(), Some(&iono()), &cfg).unwrap());
        assert!((sh.rx_clock_m - base.rx_clock_m - 299.792458).abs() < 1e-6);
        for (a, b) in base.records.iter().zip(&sh.records) {
            assert!((a.epsilon_m - b.epsilon_m).abs() < 1e-6);
        }
        let flat = processed(epoch_residuals(&synth_epoch(t, 0.0, &store, |_| 7.5), &store, &receiver(), Some(&iono()), &cfg).unwrap());
        assert!(flat.records.iter().all(|r| r.epsilon_m.abs() < 1e-6));
        assert!((flat.rx_clock_m - 7.5).abs() < 1e-6);
    }

    #[test]
    fn outliers_flagged_and_kept() {
        let (t, store) = setup();
        let ep = synth_epoch(t, 0.0, &store, |k| if k == 0 { 5000.0 } else { 0.0 });
        let res = processed(epoch_residuals(&ep, &store, &receiver(), Some(&iono()), &ResidualConfig::default()).unwrap());
        assert_eq!(res.records.len(), ep.observations.len());
        assert!(res.records[0].outlier);
        assert!(res.records[1..].iter().all(|r| !r.outlier));
    }

    #[test]
    fn clock_corrected_reception_recovers_zero_error() {
        let (t, store) = setup();
        let clock = 30_000.0;
        let rx = Receiver::new(receiver()).unwrap();
        let cfg = ResidualConfig { reception_time: ReceptionTime::ClockCorrected, ..Default::default() };
        let io = iono();
        let true_rx = t.add_seconds(-clock / C);
        let obs: Vec<_> = store
            .satellites()
            .filter_map(|sat| {
                signal_terms(sat, Band::L1, true_rx, &rx, &store, Some(&io), &cfg).unwrap().map(|tm| SatSignalObservation {
                    satellite: sat,
                    band: Band::L1,
                    pseudorange_m: tm.modeled_without_clock() + clock,
                    cn0_dbhz: None,
                })
            })
            .collect();
        let ep = ObservationEpoch { time: t, observations: obs };
        let res = processed(epoch_residuals(&ep, &store, &receiver(), Some(&io), &cfg).unwrap());
        assert!(res.records.iter().all(|r| r.epsilon_m.abs() < 1e-6));
        let tag_only = processed(epoch_residuals(&ep, &store, &receiver(), Some(&io), &ResidualConfig::default()).unwrap());
        assert!(tag_only.records.iter().any(|r| r.epsilon_m.abs() > 1e-3));
    }

    #[test]
    fn skips_and_policies() {
        let (t, store) = setup();
        let mut ep = synth_epoch(t, 0.0, &store, |_| 0.0);
        ep.observations.truncate(1);
        ep.observations[0].satellite = SatelliteId::new(Constellation::Gps, 31);
        let out = epoch_residuals(&ep, &store, &receiver(), Some(&iono()), &ResidualConfig::default()).unwrap();
        assert_eq!(out, EpochOutcome::Skipped(SkipReason::NoUsableSatellites));
        assert!(epoch_residuals(&ep, &store, &receiver(), None, &ResidualConfig::default()).is_err());
        let cfg = ResidualConfig { iono_policy: IonoPolicy::ZeroIfAbsent, tropo: None, ..Default::default() };
        let ep = synth_epoch(t, 0.0, &store, |_| 0.0);
        let res = processed(epoch_residuals(&ep, &store, &receiver(), None, &cfg).unwrap());
        assert!(res.records.iter().all(|r| r.iono_m == 0.0 && r.tropo_m == 0.0));
    }

    #[test]
    fn band_independence() {
        let (t, store) = setup();
        let rx = Receiver::new(receiver()).unwrap();
        let cfg = ResidualConfig::default();
        let io = iono();
        let mut joint = Vec::new();
        for band in [Band::L1, Band::L5] {
            for (k, sat) in store.satellites().enumerate() {
                if let Some(tm) = signal_terms(sat, band, t, &rx, &store, Some(&io), &cfg).unwrap() {
                    let bias = if band == Band::L5 { 40.0 } else { 0.0 };
                    joint.push(SatSignalObservation { satellite: sat, band, pseudorange_m: tm.modeled_without_clock() + bias + (k as f64).sin(), cn0_dbhz: None });
                }
            }
        }
        let all = processed(epoch_residuals(&ObservationEpoch { time: t, observations: joint.clone() }, &store, &receiver(), Some(&io), &cfg).unwrap());
        for band in [Band::L1, Band::L5] {
            let only: Vec<_> = joint.iter().filter(|o| o.band == band).cloned().collect();
            let sep = processed(epoch_residuals(&ObservationEpoch { time: t, observations: only }, &store, &receiver(), Some(&io), &cfg).unwrap());
            let from_all: Vec<_> = all.records.iter().filter(|r| r.band == band).map(|r| r.epsilon_m).collect();
            let from_sep: Vec<_> = sep.records.iter().map(|r| r.epsilon_m).collect();
            assert_eq!(from_all, from_sep);
        }
    }

    #[test]
    fn tgd_scaling_and_csv_round_trip() {
        let (t, store) = setup();
        let rx = Receiver::new(receiver()).unwrap();
        let cfg = ResidualConfig::default();
        let sat = SatelliteId::new(Constellation::Gps, 1);
        let sol_state = satellite_state(store.select(sat, t).unwrap(), t).unwrap();
        assert!(sol_state.clock_offset.is_finite());
        let ep = synth_epoch(t, 0.0, &store, |k| k as f64);
        let res = processed(epoch_residuals(&ep, &store, &receiver(), Some(&iono()), &cfg).unwrap());
        let s = signal_terms(res.records[0].satellite, Band::L5, t, &rx, &store, Some(&iono()), &cfg).unwrap().unwrap();
        assert!((s.tgd_m / res.records[0].tgd_m - Band::L5.l1_scale()).abs() < 1e-12);

        let samples: Vec<_> = res.records.iter().map(|r| ResidualSample { class: Some(EnvironmentClass::Trees), ..r.sample() }).collect();
        let mut buf = Vec::new();
        write_residuals_csv(&mut buf, &samples).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("week,sow,sat,band,epsilon_m,elev_rad,az_rad,cn0_dbhz,class\n"));
        assert_eq!(read_residuals_csv(buf.as_slice(), Path::new("r.csv")).unwrap(), samples);
    }
}
