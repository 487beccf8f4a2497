//! The toolkit's own observation exchange format:
//! `week,sow,sat,band,pseudorange_m,cn0_dbhz`, one row per signal observation.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    valid_cn0, valid_pseudorange, Band, ObsData, ObservationEpoch, ParseReport, SatSignalObservation, SatelliteId,
    SignalConfig,
};
use crate::{Error, GnssTime, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ObsRow {
    week: i32,
    sow: f64,
    sat: SatelliteId,
    band: Band,
    pseudorange_m: f64,
    cn0_dbhz: Option<f64>,
}

pub fn write_obs_csv<W: Write>(writer: W, epochs: &[ObservationEpoch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for epoch in epochs {
        for o in &epoch.observations {
            w.serialize(ObsRow {
                week: epoch.time.week,
                sow: epoch.time.sow,
                sat: o.satellite,
                band: o.band,
                pseudorange_m: o.pseudorange_m,
                cn0_dbhz: o.cn0_dbhz,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads an observation CSV keeping only the configured (constellation, band) pairs.
pub fn read_obs_csv(path: &Path, signals: &[SignalConfig]) -> Result<ObsData> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_obs_csv_from(file, path, signals)
}

pub(crate) fn read_obs_csv_from<R: std::io::Read>(reader: R, path: &Path, signals: &[SignalConfig]) -> Result<ObsData> {
    let wanted: HashSet<Band> = signals.iter().map(|s| s.band).collect();
    let mut report = ParseReport::default();
    let mut epochs: Vec<ObservationEpoch> = Vec::new();
    let mut seen: HashSet<(SatelliteId, Band)> = HashSet::new();
    let mut rdr = csv::Reader::from_reader(reader);
    for (k, row) in rdr.deserialize::<ObsRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let time = GnssTime::new(row.week, row.sow);
        let same_epoch = epochs.last().is_some_and(|e| e.time == time);
        if !same_epoch {
            if let Some(last) = epochs.last() {
                if time.seconds_since(&last.time) <= 0.0 {
                    return Err(Error::parse(path, line, format!("time regression at {time}")));
                }
            }
            epochs.push(ObservationEpoch {
                time,
                observations: Vec::new(),
            });
            seen.clear();
        }
        if !wanted.contains(&row.band) || row.band.constellation() != row.sat.constellation {
            report.unsupported(format!("{}:{}", row.sat.constellation.letter(), row.band));
            continue;
        }
        if !valid_pseudorange(row.pseudorange_m) {
            report.invalid_values += 1;
            continue;
        }
        let cn0 = match row.cn0_dbhz {
            Some(v) if valid_cn0(v) => Some(v),
            Some(_) => {
                report.invalid_values += 1;
                None
            }
            None => None,
        };
        if !seen.insert((row.sat, row.band)) {
            return Err(Error::parse(path, line, format!("duplicate {} {} in epoch", row.sat, row.band)));
        }
        let epoch = epochs.last_mut().expect("epoch pushed above");
        epoch.observations.push(SatSignalObservation {
            satellite: row.sat,
            band: row.band,
            pseudorange_m: row.pseudorange_m,
            cn0_dbhz: cn0,
        });
    }
    report.epochs_read = epochs.len();
    Ok(ObsData {
        epochs,
        leap_seconds: None,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Constellation;
    use proptest::prelude::*;

    fn all_signals() -> Vec<SignalConfig> {
        vec![
            SignalConfig::new(Constellation::Gps, Band::L1, "C1C"),
            SignalConfig::new(Constellation::Gps, Band::L5, "C5Q"),
            SignalConfig::new(Constellation::Galileo, Band::E1, "C1C"),
        ]
    }

    fn arb_epochs() -> impl Strategy<Value = Vec<ObservationEpoch>> {
        let obs = (1u8..33, 0usize..3, 1.0e6f64..5.0e7, proptest::option::of(0.5f64..70.0));
        prop::collection::vec((0.001f64..5.0, prop::collection::vec(obs, 0..8)), 1..6).prop_map(|items| {
            let mut t = GnssTime::new(2200, 1000.0);
            let mut out = Vec::new();
            for (dt, list) in items {
                t = t.add_seconds(dt);
                let mut seen = HashSet::new();
                let mut observations = Vec::new();
                for (prn, b, pr, cn0) in list {
                    let (c, band) = [(Constellation::Gps, Band::L1), (Constellation::Gps, Band::L5), (Constellation::Galileo, Band::E1)][b];
                    let sat = SatelliteId::new(c, prn);
                    if pr <= 1.0e6 || !seen.insert((sat, band)) {
                        continue;
                    }
                    observations.push(SatSignalObservation { satellite: sat, band, pseudorange_m: pr, cn0_dbhz: cn0 });
                }
                out.push(ObservationEpoch { time: t, observations });
            }
            out
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(epochs in arb_epochs()) {
            // epochs without observations have no rows and cannot survive the trip
            let epochs: Vec<_> = epochs.into_iter().filter(|e| !e.observations.is_empty()).collect();
            let mut buf = Vec::new();
            write_obs_csv(&mut buf, &epochs).unwrap();
            let back = read_obs_csv_from(buf.as_slice(), Path::new("mem.csv"), &all_signals()).unwrap();
            prop_assert_eq!(back.epochs.len(), epochs.len());
            for (a, b) in back.epochs.iter().zip(&epochs) {
                prop_assert_eq!(a.time.week, b.time.week);
                prop_assert_eq!(a.time.sow.to_bits(), b.time.sow.to_bits());
                prop_assert_eq!(a.observations.len(), b.observations.len());
                for (x, y) in a.observations.iter().zip(&b.observations) {
                    prop_assert_eq!(x.pseudorange_m.to_bits(), y.pseudorange_m.to_bits());
                    prop_assert_eq!(x.cn0_dbhz.map(f64::to_bits), y.cn0_dbhz.map(f64::to_bits));
                    prop_assert_eq!(x.satellite, y.satellite);
                }
            }
        }
    }

    #[test]
    fn unconfigured_band_counted() {
        let text = "week,sow,sat,band,pseudorange_m,cn0_dbhz\n2200,0,G01,L1,2.1e7,45\n2200,0,G01,L2,2.1e7,\n";
        let data = read_obs_csv_from(text.as_bytes(), Path::new("m.csv"), &SignalConfig::default_set()).unwrap();
        assert_eq!(data.epochs.len(), 1);
        assert_eq!(data.epochs[0].observations.len(), 1);
        assert_eq!(data.report.unsupported["G:L2"], 1);
    }
}
