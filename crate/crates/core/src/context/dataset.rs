use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvironmentClass, FeatureVector};
use crate::ingest::LabelTimeline;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetPolicy {
    /// Keep only homogeneous environment classes.
    #[default]
    ClearOnly,
    /// Keep every labeled sample, mixed classes as their own labels.
    AllClasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub class: EnvironmentClass,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub per_class: BTreeMap<EnvironmentClass, usize>,
    pub dropped_mixed: usize,
    pub dropped_unlabeled: usize,
    pub kept: usize,
}

pub fn build_dataset(features: &[FeatureVector], timeline: &LabelTimeline, policy: DatasetPolicy) -> Result<(Vec<LabeledSample>, DatasetReport)> {
    build_dataset_labeled(
        features.iter().map(|f| (f.clone(), timeline.class_at(f.time))).collect(),
        policy,
    )
}

pub fn build_dataset_labeled(
    rows: Vec<(FeatureVector, Option<EnvironmentClass>)>,
    policy: DatasetPolicy,
) -> Result<(Vec<LabeledSample>, DatasetReport)> {
    let mut report = DatasetReport::default();
    let mut out = Vec::new();
    for (features, class) in rows {
        let Some(class) = class else {
            report.dropped_unlabeled += 1;
            continue;
        };
        if policy == DatasetPolicy::ClearOnly && !class.is_clear() {
            report.dropped_mixed += 1;
            continue;
        }
        *report.per_class.entry(class).or_default() += 1;
        out.push(LabeledSample { features, class });
    }
    report.kept = out.len();
    if out.is_empty() {
        return Err(Error::InvalidInput("labeled dataset is empty".into()));
    }
    Ok((out, report))
}

/// Seeded shuffle then split into `train_size` training and the rest for test.
pub fn split<T: Clone>(dataset: &[T], train_size: usize, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if train_size == 0 || train_size >= dataset.len() {
        return Err(Error::InvalidInput(format!(
            "train size {train_size} invalid for {} samples",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train = idx[..train_size].iter().map(|&i| dataset[i].clone()).collect();
    let test = idx[train_size..].iter().map(|&i| dataset[i].clone()).collect();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LabelInterval;
    use crate::GnssTime;
    use std::collections::HashSet;

    fn fv(sow: f64) -> FeatureVector {
        FeatureVector { time: GnssTime::new(2200, sow), values: vec![sow], present: vec![true] }
    }

    #[test]
    fn policies() {
        let tl = LabelTimeline::new(vec![
            LabelInterval { start: GnssTime::new(2200, 0.0), end: GnssTime::new(2200, 10.0), class: EnvironmentClass::Station },
            LabelInterval { start: GnssTime::new(2200, 10.0), end: GnssTime::new(2200, 20.0), class: EnvironmentClass::MixedTreesBuildings },
        ])
        .unwrap();
        let feats: Vec<_> = (0..30).map(|k| fv(k as f64)).collect();
        let (clear, rep) = build_dataset(&feats, &tl, DatasetPolicy::ClearOnly).unwrap();
        assert_eq!(clear.len(), 10);
        assert!(clear.iter().all(|s| s.class == EnvironmentClass::Station));
        assert_eq!((rep.dropped_mixed, rep.dropped_unlabeled), (10, 10));
        let (all, rep) = build_dataset(&feats, &tl, DatasetPolicy::AllClasses).unwrap();
        assert_eq!(all.len(), 20);
        assert_eq!(rep.per_class[&EnvironmentClass::MixedTreesBuildings], 10);
        assert!(build_dataset(&feats[25..], &tl, DatasetPolicy::ClearOnly).is_err());
    }

    #[test]
    fn split_partition_and_determinism() {
        let data: Vec<usize> = (0..3000).collect();
        let (tr, te) = split(&data, 2000, 7).unwrap();
        assert_eq!((tr.len(), te.len()), (2000, 1000));
        let a: HashSet<_> = tr.iter().collect();
        let b: HashSet<_> = te.iter().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 3000);
        assert_eq!(split(&data, 2000, 7).unwrap().0, tr);
        assert!(split(&data, 3000, 7).is_err());
        assert!(split(&data, 0, 7).is_err());
    }
}
