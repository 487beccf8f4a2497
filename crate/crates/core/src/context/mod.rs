//! Railway environment taxonomy and per-epoch classification features.

mod dataset;
mod features;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use dataset::{build_dataset, build_dataset_labeled, split, DatasetPolicy, DatasetReport, LabeledSample};
pub use features::{
    dop, featurize_epoch, featurize_journey, read_features_csv, write_features_csv, EpochGeometry, FeatureLayout,
    FeatureSchema, FeatureVector, FeaturesTable, FEATURE_SCHEMA_VERSION,
};
pub use stats::{sample_stats, SampleStats};

/// The 13 railway environment classes: 10 homogeneous ("clear") classes and
/// three mixed classes where the two sides of the track differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EnvironmentClass {
    Trees,
    Buildings,
    OpenSkyUrban,
    OpenSkyRural,
    Bridge,
    PostBridge,
    Station,
    Triage,
    Tunnel,
    PostTunnel,
    MixedTreesOpenSky,
    MixedTreesBuildings,
    MixedBuildingsOpenSky,
}

impl EnvironmentClass {
    pub const ALL: [EnvironmentClass; 13] = [
        EnvironmentClass::Trees,
        EnvironmentClass::Buildings,
        EnvironmentClass::OpenSkyUrban,
        EnvironmentClass::OpenSkyRural,
        EnvironmentClass::Bridge,
        EnvironmentClass::PostBridge,
        EnvironmentClass::Station,
        EnvironmentClass::Triage,
        EnvironmentClass::Tunnel,
        EnvironmentClass::PostTunnel,
        EnvironmentClass::MixedTreesOpenSky,
        EnvironmentClass::MixedTreesBuildings,
        EnvironmentClass::MixedBuildingsOpenSky,
    ];

    /// Stable serialization code.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    /// Canonical label string as used in label files.
    pub fn name(self) -> &'static str {
        match self {
            EnvironmentClass::Trees => "Trees",
            EnvironmentClass::Buildings => "Buildings",
            EnvironmentClass::OpenSkyUrban => "Open-sky (urban)",
            EnvironmentClass::OpenSkyRural => "Open-sky (rural)",
            EnvironmentClass::Bridge => "Bridge",
            EnvironmentClass::PostBridge => "Post-bridge",
            EnvironmentClass::Station => "Station",
            EnvironmentClass::Triage => "Triage",
            EnvironmentClass::Tunnel => "Tunnel",
            EnvironmentClass::PostTunnel => "Post-tunnel",
            EnvironmentClass::MixedTreesOpenSky => "Mixed trees and open-sky",
            EnvironmentClass::MixedTreesBuildings => "Mixed trees and buildings",
            EnvironmentClass::MixedBuildingsOpenSky => "Mixed buildings and open-sky",
        }
    }

    pub fn ident(self) -> &'static str {
        match self {
            EnvironmentClass::Trees => "Trees",
            EnvironmentClass::Buildings => "Buildings",
            EnvironmentClass::OpenSkyUrban => "OpenSkyUrban",
            EnvironmentClass::OpenSkyRural => "OpenSkyRural",
            EnvironmentClass::Bridge => "Bridge",
            EnvironmentClass::PostBridge => "PostBridge",
            EnvironmentClass::Station => "Station",
            EnvironmentClass::Triage => "Triage",
            EnvironmentClass::Tunnel => "Tunnel",
            EnvironmentClass::PostTunnel => "PostTunnel",
            EnvironmentClass::MixedTreesOpenSky => "MixedTreesOpenSky",
            EnvironmentClass::MixedTreesBuildings => "MixedTreesBuildings",
            EnvironmentClass::MixedBuildingsOpenSky => "MixedBuildingsOpenSky",
        }
    }

    /// True for the homogeneous (non-mixed) classes.
    pub fn is_clear(self) -> bool {
        !matches!(
            self,
            EnvironmentClass::MixedTreesOpenSky
                | EnvironmentClass::MixedTreesBuildings
                | EnvironmentClass::MixedBuildingsOpenSky
        )
    }
}

impl fmt::Display for EnvironmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvironmentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s || c.ident() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown environment class '{s}'")))
    }
}

impl Serialize for EnvironmentClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EnvironmentClass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
