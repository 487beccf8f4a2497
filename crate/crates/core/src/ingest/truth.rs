use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geodesy::EcefPosition;
use crate::{Error, GnssTime, Result};

/// Sanity bound on train speed between consecutive truth samples (m/s).
pub const MAX_TRAIN_SPEED: f64 = 150.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub time: GnssTime,
    pub position: EcefPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InterpolationMode {
    #[default]
    LinearEcef,
}

/// Time-ordered reference trajectory of the antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTrack {
    samples: Vec<TruthSample>,
    pub mode: InterpolationMode,
    /// Rows dropped for non-finite coordinates.
    pub rejected_rows: usize,
}

#[derive(Debug, Deserialize, Serialize)]
pub(crate) struct TruthRow {
    pub time_gps_week: i32,
    pub time_gps_sow: f64,
    pub ecef_x_m: f64,
    pub ecef_y_m: f64,
    pub ecef_z_m: f64,
}

impl GroundTruthTrack {
    pub fn new(samples: Vec<TruthSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "ground truth needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (k, pair) in samples.windows(2).enumerate() {
            let dt = pair[1].time.seconds_since(&pair[0].time);
            if dt <= 0.0 {
                return Err(Error::InvalidInput(format!("ground truth time not increasing at sample {}", k + 1)));
            }
            let speed = pair[1].position.distance(&pair[0].position) / dt;
            if speed >= MAX_TRAIN_SPEED {
                return Err(Error::InvalidInput(format!(
                    "ground truth implies {speed:.1} m/s between samples {k} and {}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            samples,
            mode: InterpolationMode::LinearEcef,
            rejected_rows: 0,
        })
    }

    pub fn samples(&self) -> &[TruthSample] {
        &self.samples
    }

    pub fn start(&self) -> GnssTime {
        self.samples[0].time
    }

    pub fn end(&self) -> GnssTime {
        self.samples[self.samples.len() - 1].time
    }

    /// Linear ECEF interpolation; `None` outside the covered span.
    pub fn position_at(&self, t: GnssTime) -> Option<EcefPosition> {
        if t.seconds_since(&self.start()) < 0.0 || t.seconds_since(&self.end()) > 0.0 {
            return None;
        }
        let idx = self.samples.partition_point(|s| s.time.seconds_since(&t) <= 0.0);
        if idx == 0 {
            return Some(self.samples[0].position);
        }
        let a = &self.samples[idx - 1];
        if idx == self.samples.len() || a.time == t {
            return Some(a.position);
        }
        let b = &self.samples[idx];
        let w = t.seconds_since(&a.time) / b.time.seconds_since(&a.time);
        Some(a.position.lerp(&b.position, w))
    }

    /// Mean speed between consecutive samples `k` and `k + 1`.
    pub fn speed(&self, k: usize) -> f64 {
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        b.position.distance(&a.position) / b.time.seconds_since(&a.time)
    }
}

pub fn parse_ground_truth(path: &Path) -> Result<GroundTruthTrack> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth_from(file, path)
}

pub(crate) fn parse_ground_truth_from<R: std::io::Read>(reader: R, path: &Path) -> Result<GroundTruthTrack> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut samples: Vec<TruthSample> = Vec::new();
    let mut rejected = 0;
    for (k, row) in rdr.deserialize::<TruthRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let position = EcefPosition::new(row.ecef_x_m, row.ecef_y_m, row.ecef_z_m);
        if !position.is_finite() || !row.time_gps_sow.is_finite() {
            rejected += 1;
            continue;
        }
        let time = GnssTime::new(row.time_gps_week, row.time_gps_sow);
        if let Some(prev) = samples.last() {
            if time.seconds_since(&prev.time) <= 0.0 {
                return Err(Error::parse(path, line, format!("time regression at row {line} ({time})")));
            }
        }
        samples.push(TruthSample { time, position });
    }
    let mut track = GroundTruthTrack::new(samples).map_err(|e| match e {
        Error::InvalidInput(m) => Error::parse(path, 0, m),
        other => other,
    })?;
    track.rejected_rows = rejected;
    Ok(track)
}

pub fn write_truth_csv<W: std::io::Write>(writer: W, samples: &[TruthSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(TruthRow {
            time_gps_week: s.time.week,
            time_gps_sow: s.time.sow,
            ecef_x_m: s.position.x,
            ecef_y_m: s.position.y,
            ecef_z_m: s.position.z,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "time_gps_week,time_gps_sow,ecef_x_m,ecef_y_m,ecef_z_m\n";

    fn parse(text: &str) -> Result<GroundTruthTrack> {
        parse_ground_truth_from(text.as_bytes(), Path::new("truth.csv"))
    }

    #[test]
    fn two_rows_give_ten_meters_per_second() {
        let t = parse(&format!("{HEAD}2200,0,4000000,300000,4900000\n2200,1,4000010,300000,4900000\n")).unwrap();
        assert_eq!(t.samples().len(), 2);
        assert!((t.speed(0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn time_regression_names_row() {
        let err = parse(&format!(
            "{HEAD}2200,0,4000000,300000,4900000\n2200,2,4000010,300000,4900000\n2200,1,4000020,300000,4900000\n"
        ))
        .unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("row 4"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn too_few_samples_and_non_finite_rows() {
        assert!(parse(&format!("{HEAD}2200,0,4000000,300000,4900000\n")).is_err());
        let t = parse(&format!(
            "{HEAD}2200,0,4000000,300000,4900000\n2200,1,NaN,300000,4900000\n2200,2,4000010,300000,4900000\n"
        ))
        .unwrap();
        assert_eq!(t.samples().len(), 2);
        assert_eq!(t.rejected_rows, 1);
    }

    #[test]
    fn many_rows() {
        let mut text = HEAD.to_string();
        for k in 0..7200 {
            text.push_str(&format!("2200,{k},{},300000,4900000\n", 4_000_000.0 + 20.0 * k as f64));
        }
        assert_eq!(parse(&text).unwrap().samples().len(), 7200);
    }

    #[test]
    fn interpolation_midpoint() {
        let t = parse(&format!("{HEAD}2200,0,0,6400000,0\n2200,1,10,6400000,0\n")).unwrap();
        let p = t.position_at(GnssTime::new(2200, 0.5)).unwrap();
        assert!((p.x - 5.0).abs() < 1e-12);
        assert!(t.position_at(GnssTime::new(2199, 604799.0)).is_none());
        assert_eq!(t.position_at(GnssTime::new(2200, 1.0)).unwrap().x, 10.0);
    }

    #[test]
    fn excessive_speed_rejected() {
        assert!(parse(&format!("{HEAD}2200,0,4000000,300000,4900000\n2200,1,4000200,300000,4900000\n")).is_err());
    }
}
