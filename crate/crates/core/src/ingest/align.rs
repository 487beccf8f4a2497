use serde::{Deserialize, Serialize};

use super::{GroundTruthTrack, LabelTimeline, ObservationEpoch};
use crate::context::EnvironmentClass;
use crate::geodesy::EcefPosition;

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEpoch {
    pub epoch: ObservationEpoch,
    pub truth: EcefPosition,
    pub class: Option<EnvironmentClass>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignReport {
    pub parsed: usize,
    pub emitted: usize,
    pub dropped_outside_truth: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Alignment {
    pub epochs: Vec<AlignedEpoch>,
    pub report: AlignReport,
}

/// Attaches interpolated truth positions and labels to each epoch. Epochs
/// outside the truth span are dropped and counted.
pub fn align(epochs: Vec<ObservationEpoch>, track: &GroundTruthTrack, timeline: Option<&LabelTimeline>) -> Alignment {
    let mut report = AlignReport {
        parsed: epochs.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(epochs.len());
    for epoch in epochs {
        let Some(truth) = track.position_at(epoch.time) else {
            report.dropped_outside_truth += 1;
            continue;
        };
        let class = timeline.and_then(|tl| tl.class_at(epoch.time));
        if class.is_none() {
            report.unlabeled += 1;
        }
        out.push(AlignedEpoch { epoch, truth, class });
    }
    report.emitted = out.len();
    Alignment { epochs: out, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{LabelInterval, TruthSample};
    use crate::GnssTime;

    fn track() -> GroundTruthTrack {
        GroundTruthTrack::new(vec![
            TruthSample { time: GnssTime::new(2200, 10.0), position: EcefPosition::new(0.0, 6.4e6, 0.0) },
            TruthSample { time: GnssTime::new(2200, 11.0), position: EcefPosition::new(10.0, 6.4e6, 0.0) },
        ])
        .unwrap()
    }

    fn epoch(sow: f64) -> ObservationEpoch {
        ObservationEpoch { time: GnssTime::new(2200, sow), observations: vec![] }
    }

    #[test]
    fn interpolates_drops_and_labels() {
        let tl = LabelTimeline::new(vec![LabelInterval {
            start: GnssTime::new(2200, 10.0),
            end: GnssTime::new(2200, 10.75),
            class: EnvironmentClass::Bridge,
        }])
        .unwrap();
        let a = align(vec![epoch(9.0), epoch(10.5), epoch(10.8), epoch(12.0)], &track(), Some(&tl));
        assert_eq!(a.report, AlignReport { parsed: 4, emitted: 2, dropped_outside_truth: 2, unlabeled: 1 });
        assert!((a.epochs[0].truth.x - 5.0).abs() < 1e-12);
        assert_eq!(a.epochs[0].class, Some(EnvironmentClass::Bridge));
        assert_eq!(a.epochs[1].class, None);
        assert_eq!(a.report.emitted + a.report.dropped_outside_truth, a.report.parsed);
    }
}
