use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::EnvironmentClass;
use crate::{Error, GnssTime, Result};

/// Half-open interval `[start, end)` carrying one environment label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start: GnssTime,
    pub end: GnssTime,
    pub class: EnvironmentClass,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelTimeline {
    intervals: Vec<LabelInterval>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct LabelRow {
    pub start_week: i32,
    pub start_sow: f64,
    pub end_week: i32,
    pub end_sow: f64,
    pub class: String,
}

impl LabelTimeline {
    /// Sorts and validates intervals: each non-empty, none overlapping.
    pub fn new(mut intervals: Vec<LabelInterval>) -> Result<Self> {
        for iv in &intervals {
            if iv.end.seconds_since(&iv.start) <= 0.0 {
                return Err(Error::InvalidInput(format!("label interval starting {} is empty", iv.start)));
            }
        }
        intervals.sort_by(|a, b| a.start.partial_cmp(&b.start).expect("finite times"));
        for pair in intervals.windows(2) {
            if pair[1].start.seconds_since(&pair[0].end) < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "label intervals overlap: [{} .. {}) and [{} .. {})",
                    pair[0].start, pair[0].end, pair[1].start, pair[1].end
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn intervals(&self) -> &[LabelInterval] {
        &self.intervals
    }

    pub fn class_at(&self, t: GnssTime) -> Option<EnvironmentClass> {
        let idx = self.intervals.partition_point(|iv| iv.start.seconds_since(&t) <= 0.0);
        let iv = self.intervals.get(idx.checked_sub(1)?)?;
        (t.seconds_since(&iv.end) < 0.0).then_some(iv.class)
    }
}

pub fn parse_labels(path: &Path) -> Result<LabelTimeline> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels_from(file, path)
}

pub(crate) fn parse_labels_from<R: std::io::Read>(reader: R, path: &Path) -> Result<LabelTimeline> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut intervals = Vec::new();
    for (k, row) in rdr.deserialize::<LabelRow>().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let class: EnvironmentClass = row
            .class
            .parse()
            .map_err(|_| Error::parse(path, line, format!("unknown environment class '{}'", row.class)))?;
        let start = GnssTime::new(row.start_week, row.start_sow);
        let end = GnssTime::new(row.end_week, row.end_sow);
        if end.seconds_since(&start) <= 0.0 {
            return Err(Error::parse(path, line, "interval end not after start"));
        }
        intervals.push(LabelInterval { start, end, class });
    }
    LabelTimeline::new(intervals).map_err(|e| match e {
        Error::InvalidInput(m) => Error::parse(path, 0, m),
        other => other,
    })
}

pub fn write_labels_csv<W: std::io::Write>(writer: W, timeline: &LabelTimeline) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for iv in timeline.intervals() {
        w.serialize(LabelRow {
            start_week: iv.start.week,
            start_sow: iv.start.sow,
            end_week: iv.end.week,
            end_sow: iv.end.sow,
            class: iv.class.name().to_string(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
