//! Readers for the journey inputs and their time alignment.

mod align;
mod labels;
mod obs_csv;
mod rinex_nav;
mod rinex_obs;
mod truth;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, GnssTime, Result};

pub use align::{align, AlignReport, AlignedEpoch, Alignment};
pub use labels::{parse_labels, write_labels_csv, LabelInterval, LabelTimeline};
pub use obs_csv::{read_obs_csv, write_obs_csv};
pub use rinex_nav::{format_rinex_nav, parse_nav, parse_nav_str, BroadcastEphemeris, IonoParams, NavData};
pub use rinex_obs::{parse_obs, parse_obs_str};
pub use truth::{parse_ground_truth, write_truth_csv, GroundTruthTrack, TruthSample, MAX_TRAIN_SPEED};

/// Valid pseudorange interval in meters.
pub const PSEUDORANGE_RANGE: (f64, f64) = (1.0e6, 5.0e7);
/// Upper bound for a usable C/N0 in dB-Hz.
pub const MAX_CN0: f64 = 70.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constellation {
    #[serde(rename = "GPS")]
    Gps,
    #[serde(rename = "GAL")]
    Galileo,
}

impl Constellation {
    pub fn letter(self) -> char {
        match self {
            Constellation::Gps => 'G',
            Constellation::Galileo => 'E',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        match c {
            'G' => Some(Constellation::Gps),
            'E' => Some(Constellation::Galileo),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Constellation::Gps => "GPS",
            Constellation::Galileo => "GAL",
        }
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "GPS" | "G" => Ok(Constellation::Gps),
            "GAL" | "E" | "Galileo" => Ok(Constellation::Galileo),
            other => Err(Error::InvalidInput(format!("unsupported constellation '{other}'"))),
        }
    }
}

/// Satellite identifier such as `G05` or `E12`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatelliteId {
    pub constellation: Constellation,
    pub prn: u8,
}

impl SatelliteId {
    pub fn new(constellation: Constellation, prn: u8) -> Self {
        Self { constellation, prn }
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:02}", self.constellation.letter(), self.prn)
    }
}

impl FromStr for SatelliteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut chars = s.chars();
        let constellation = chars
            .next()
            .and_then(Constellation::from_letter)
            .ok_or_else(|| Error::InvalidInput(format!("unsupported satellite id '{s}'")))?;
        let prn = chars
            .as_str()
            .trim()
            .parse::<u8>()
            .map_err(|_| Error::InvalidInput(format!("bad PRN in satellite id '{s}'")))?;
        Ok(Self { constellation, prn })
    }
}

impl Serialize for SatelliteId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SatelliteId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Carrier frequency band of a signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Band {
    L1,
    L2,
    L5,
    E1,
    E5a,
    E5b,
}

pub const F_L1: f64 = 1_575.42e6;
pub const F_L2: f64 = 1_227.60e6;
pub const F_L5: f64 = 1_176.45e6;
pub const F_E5B: f64 = 1_207.14e6;

impl Band {
    pub fn frequency_hz(self) -> f64 {
        match self {
            Band::L1 | Band::E1 => F_L1,
            Band::L2 => F_L2,
            Band::L5 | Band::E5a => F_L5,
            Band::E5b => F_E5B,
        }
    }

    /// `(f_L1 / f)^2`, the dispersive scale factor relative to L1.
    pub fn l1_scale(self) -> f64 {
        let r = F_L1 / self.frequency_hz();
        r * r
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::L1 => "L1",
            Band::L2 => "L2",
            Band::L5 => "L5",
            Band::E1 => "E1",
            Band::E5a => "E5a",
            Band::E5b => "E5b",
        }
    }

    pub fn constellation(self) -> Constellation {
        match self {
            Band::L1 | Band::L2 | Band::L5 => Constellation::Gps,
            Band::E1 | Band::E5a | Band::E5b => Constellation::Galileo,
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L1" => Ok(Band::L1),
            "L2" => Ok(Band::L2),
            "L5" => Ok(Band::L5),
            "E1" => Ok(Band::E1),
            "E5a" => Ok(Band::E5a),
            "E5b" => Ok(Band::E5b),
            other => Err(Error::InvalidInput(format!("unknown band '{other}'"))),
        }
    }
}

/// One processed signal: which RINEX pseudorange code feeds which band.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignalConfig {
    pub constellation: Constellation,
    pub band: Band,
    /// RINEX 3 pseudorange observation code, e.g. `C1C`.
    pub code: String,
}

impl SignalConfig {
    pub fn new(constellation: Constellation, band: Band, code: &str) -> Self {
        Self {
            constellation,
            band,
            code: code.to_string(),
        }
    }

    /// Matching signal-strength code (`C1C` -> `S1C`).
    pub fn cn0_code(&self) -> String {
        format!("S{}", &self.code[1..])
    }

    pub fn default_set() -> Vec<SignalConfig> {
        vec![
            SignalConfig::new(Constellation::Gps, Band::L1, "C1C"),
            SignalConfig::new(Constellation::Galileo, Band::E1, "C1C"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SatSignalObservation {
    pub satellite: SatelliteId,
    pub band: Band,
    pub pseudorange_m: f64,
    pub cn0_dbhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationEpoch {
    pub time: GnssTime,
    pub observations: Vec<SatSignalObservation>,
}

impl ObservationEpoch {
    pub fn satellites(&self) -> Vec<SatelliteId> {
        let mut sats: Vec<_> = self.observations.iter().map(|o| o.satellite).collect();
        sats.sort();
        sats.dedup();
        sats
    }
}

/// Counters gathered while reading an observation or navigation file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub epochs_read: usize,
    pub epochs_skipped: usize,
    pub records_read: usize,
    pub records_skipped: usize,
    /// Observation codes or systems present in the file but not configured.
    pub unsupported: BTreeMap<String, usize>,
    pub invalid_values: usize,
    pub warnings: Vec<String>,
}

impl ParseReport {
    pub(crate) fn unsupported(&mut self, what: impl Into<String>) {
        *self.unsupported.entry(what.into()).or_default() += 1;
    }

    pub(crate) fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }
}

/// Parsed observation file.
#[derive(Debug, Clone, Default)]
pub struct ObsData {
    pub epochs: Vec<ObservationEpoch>,
    pub leap_seconds: Option<i32>,
    pub report: ParseReport,
}

/// Reads observations from either a RINEX 3 file or the toolkit's CSV format,
/// chosen by extension (`.csv`) or by sniffing the first line.
pub fn read_observations(path: &Path, signals: &[SignalConfig]) -> Result<ObsData> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_obs_csv(path, signals)
    } else {
        parse_obs(path, signals)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn valid_pseudorange(pr: f64) -> bool {
    pr.is_finite() && pr > PSEUDORANGE_RANGE.0 && pr < PSEUDORANGE_RANGE.1
}

pub(crate) fn valid_cn0(cn0: f64) -> bool {
    cn0.is_finite() && cn0 > 0.0 && cn0 <= MAX_CN0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satellite_id_round_trip() {
        let id: SatelliteId = "E07".parse().unwrap();
        assert_eq!(id, SatelliteId::new(Constellation::Galileo, 7));
        assert_eq!(id.to_string(), "E07");
        assert!("R01".parse::<SatelliteId>().is_err());
    }

    #[test]
    fn band_scales() {
        assert_eq!(Band::L1.l1_scale(), 1.0);
        let s = Band::L5.l1_scale();
        assert!((s - (1575.42f64 / 1176.45).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn cn0_code_mapping() {
        assert_eq!(SignalConfig::new(Constellation::Gps, Band::L5, "C5Q").cn0_code(), "S5Q");
    }
}
