use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix4, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{sample_stats, EnvironmentClass};
use crate::geodesy::AzEl;
use crate::ingest::{Band, Constellation, ObservationEpoch, SatelliteId};
use crate::{Error, GnssTime, Result};

pub const FEATURE_SCHEMA_VERSION: u32 = 1;

const STAT_NAMES: [&str; 6] = ["mean", "min", "max", "var", "skew", "kurt"];
const GEOMETRY_NAMES: [&str; 7] = ["nsat", "elev_mean", "elev_max", "elev_min", "pdop", "hdop", "vdop"];

/// Line-of-sight geometry of the satellites seen at one epoch.
pub type EpochGeometry = BTreeMap<SatelliteId, AzEl>;

/// Ordered, versioned feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub names: Vec<String>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Short hex digest of version and names.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.version.to_le_bytes());
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(&h.finalize()[..8])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Which signals and constellations feed the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    signals: Vec<(Constellation, Band)>,
    constellations: Vec<Constellation>,
    pub elevation_cutoff: f64,
    /// Odd number of epochs pooled for the C/N0 statistics; 1 disables windowing.
    pub window: usize,
}

impl FeatureLayout {
    pub fn new(signals: &[(Constellation, Band)], elevation_cutoff: f64, window: usize) -> Result<Self> {
        if signals.is_empty() {
            return Err(Error::Config("feature layout needs at least one signal".into()));
        }
        if window == 0 || window % 2 == 0 {
            return Err(Error::Config(format!("feature window must be odd, got {window}")));
        }
        let mut signals = signals.to_vec();
        signals.sort();
        signals.dedup();
        let mut constellations: Vec<_> = signals.iter().map(|s| s.0).collect();
        constellations.dedup();
        Ok(Self {
            signals,
            constellations,
            elevation_cutoff,
            window,
        })
    }

    pub fn schema(&self) -> FeatureSchema {
        let mut names = Vec::new();
        for (c, b) in &self.signals {
            for s in STAT_NAMES {
                names.push(format!("{c}_{b}_cn0_{s}"));
            }
        }
        for c in &self.constellations {
            for g in GEOMETRY_NAMES {
                names.push(format!("{c}_{g}"));
            }
        }
        names.push("total_nsat".into());
        FeatureSchema {
            version: FEATURE_SCHEMA_VERSION,
            names,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub time: GnssTime,
    /// Masked entries hold NaN.
    pub values: Vec<f64>,
    pub present: Vec<bool>,
}

impl FeatureVector {
    fn masked(time: GnssTime, len: usize) -> Self {
        Self {
            time,
            values: vec![f64::NAN; len],
            present: vec![false; len],
        }
    }

    fn set(&mut self, idx: usize, v: Option<f64>) {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            self.values[idx] = v;
            self.present[idx] = true;
        }
    }

    pub fn get(&self, idx: usize) -> Option<f64> {
        self.present[idx].then_some(self.values[idx])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// PDOP, HDOP and VDOP from unit line-of-sight vectors (position + clock
/// states). `None` when the geometry does not determine all four states.
pub fn dop(azels: &[AzEl]) -> Option<(f64, f64, f64)> {
    if azels.len() < 4 {
        return None;
    }
    let mut normal = Matrix4::<f64>::zeros();
    for ae in azels {
        let (se, ce) = ae.elevation.sin_cos();
        let (sa, ca) = ae.azimuth.sin_cos();
        let row = nalgebra::Vector4::new(ce * sa, ce * ca, se, 1.0);
        normal += row * row.transpose();
    }
    let eig = SymmetricEigen::new(normal);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 1e-10 * max) {
        return None;
    }
    let q = normal.try_inverse()?;
    let (qe, qn, qu) = (q[(0, 0)], q[(1, 1)], q[(2, 2)]);
    Some(((qe + qn + qu).sqrt(), (qe + qn).sqrt(), qu.sqrt()))
}

/// Features of one epoch: C/N0 statistics per signal and geometry per
/// constellation over satellites above the elevation cutoff.
pub fn featurize_epoch(epoch: &ObservationEpoch, geometry: &EpochGeometry, layout: &FeatureLayout) -> FeatureVector {
    featurize_window(epoch, geometry, &[epoch], layout)
}

fn featurize_window(
    center: &ObservationEpoch,
    geometry: &EpochGeometry,
    pool: &[&ObservationEpoch],
    layout: &FeatureLayout,
) -> FeatureVector {
    let len = layout.signals.len() * STAT_NAMES.len() + layout.constellations.len() * GEOMETRY_NAMES.len() + 1;
    let mut fv = FeatureVector::masked(center.time, len);
    let visible = |sat: &SatelliteId| geometry.get(sat).filter(|ae| ae.elevation >= layout.elevation_cutoff);

    for (k, (c, b)) in layout.signals.iter().enumerate() {
        let cn0: Vec<f64> = pool
            .iter()
            .flat_map(|e| e.observations.iter())
            .filter(|o| o.satellite.constellation == *c && o.band == *b && visible(&o.satellite).is_some())
            .filter_map(|o| o.cn0_dbhz)
            .collect();
        if let Ok(s) = sample_stats(&cn0) {
            let base = k * STAT_NAMES.len();
            for (i, v) in [Some(s.mean), Some(s.min), Some(s.max), s.variance, s.skewness, s.kurtosis]
                .into_iter()
                .enumerate()
            {
                fv.set(base + i, v);
            }
        }
    }

    let offset = layout.signals.len() * STAT_NAMES.len();
    let mut total = 0usize;
    for (k, c) in layout.constellations.iter().enumerate() {
        let base = offset + k * GEOMETRY_NAMES.len();
        let azels: Vec<AzEl> = center
            .satellites()
            .into_iter()
            .filter(|s| s.constellation == *c && layout.signals.iter().any(|(sc, _)| sc == c))
            .filter_map(|s| visible(&s).copied())
            .collect();
        total += azels.len();
        fv.set(base, Some(azels.len() as f64));
        if azels.is_empty() {
            continue;
        }
        let elev: Vec<f64> = azels.iter().map(|a| a.elevation).collect();
        if let Ok(s) = sample_stats(&elev) {
            fv.set(base + 1, Some(s.mean));
            fv.set(base + 2, Some(s.max));
            fv.set(base + 3, Some(s.min));
        }
        if let Some((p, h, v)) = dop(&azels) {
            fv.set(base + 4, Some(p));
            fv.set(base + 5, Some(h));
            fv.set(base + 6, Some(v));
        }
    }
    fv.set(len - 1, Some(total as f64));
    fv
}

/// Featurizes a whole journey, pooling C/N0 over a centered window when
/// `layout.window > 1`.
pub fn featurize_journey(items: &[(ObservationEpoch, EpochGeometry)], layout: &FeatureLayout) -> Vec<FeatureVector> {
    let half = layout.window / 2;
    (0..items.len())
        .into_par_iter()
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(items.len());
            let pool: Vec<&ObservationEpoch> = items[lo..hi].iter().map(|(e, _)| e).collect();
            featurize_window(&items[k].0, &items[k].1, &pool, layout)
        })
        .collect()
}

/// Feature rows with optional labels, as stored in `features.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturesTable {
    pub schema: FeatureSchema,
    pub rows: Vec<(FeatureVector, Option<EnvironmentClass>)>,
}

pub fn write_features_csv<W: Write>(writer: W, table: &FeaturesTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["week".to_string(), "sow".to_string()];
    header.extend(table.schema.names.iter().cloned());
    header.push("class".into());
    w.write_record(&header)?;
    for (fv, class) in &table.rows {
        let mut rec = vec![fv.time.week.to_string(), fv.time.sow.to_string()];
        rec.extend((0..fv.len()).map(|i| fv.get(i).map(|v| v.to_string()).unwrap_or_default()));
        rec.push(class.map(|c| c.name().to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_features_csv<R: Read>(reader: R, path: &Path) -> Result<FeaturesTable> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let n = header.len();
    if n < 4 || &header[0] != "week" || &header[1] != "sow" || &header[n - 1] != "class" {
        return Err(Error::parse(path, 1, "features header must be week,sow,<features>,class"));
    }
    let schema = FeatureSchema {
        version: FEATURE_SCHEMA_VERSION,
        names: header.iter().skip(2).take(n - 3).map(str::to_string).collect(),
    };
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let bad = |what: &str| Error::parse(path, line, format!("bad {what}"));
        let week: i32 = rec[0].parse().map_err(|_| bad("week"))?;
        let sow: f64 = rec[1].parse().map_err(|_| bad("sow"))?;
        let mut fv = FeatureVector::masked(GnssTime::new(week, sow), schema.len());
        for i in 0..schema.len() {
            let field = &rec[i + 2];
            if !field.is_empty() {
                let v: f64 = field.parse().map_err(|_| bad(&schema.names[i]))?;
                fv.set(i, Some(v));
            }
        }
        let class = match &rec[n - 1] {
            "" => None,
            s => Some(s.parse().map_err(|_| Error::parse(path, line, format!("unknown environment class '{s}'")))?),
        };
        rows.push((fv, class));
    }
    Ok(FeaturesTable { schema, rows })
}
