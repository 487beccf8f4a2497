use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::atmosphere::TropoModel;
use crate::classify::{GbtParams, MlrParams};
use crate::context::{DatasetPolicy, EnvironmentClass, FeatureLayout};
use crate::errormodel::{ErrorGrouping, FastMcdParams, FitConfig};
use crate::ingest::{Band, Constellation, SignalConfig};
use crate::residuals::{ClockGrouping, IonoPolicy, ReceptionTime, ResidualConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub obs: PathBuf,
    pub nav: PathBuf,
    pub truth: PathBuf,
    pub labels: Option<PathBuf>,
    /// Defaults to `<out>/residuals.csv`.
    pub residuals: Option<PathBuf>,
    /// Defaults to `<out>/features.csv`.
    pub features: Option<PathBuf>,
    /// Defaults to `<out>/model.json`.
    pub model: Option<PathBuf>,
    /// Defaults to `<out>/error_models.json`.
    pub error_models: Option<PathBuf>,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            obs: "obs.csv".into(),
            nav: "nav.rnx".into(),
            truth: "truth.csv".into(),
            labels: Some("labels.csv".into()),
            residuals: None,
            features: None,
            model: None,
            error_models: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualSection {
    pub elevation_cutoff_deg: f64,
    pub tropo: bool,
    pub relative_humidity: f64,
    pub iono_policy: IonoPolicy,
    pub clock_grouping: ClockGrouping,
    pub reception_time: ReceptionTime,
}

impl Default for ResidualSection {
    fn default() -> Self {
        Self {
            elevation_cutoff_deg: 5.0,
            tropo: true,
            relative_humidity: 0.5,
            iono_policy: IonoPolicy::Require,
            clock_grouping: ClockGrouping::PerConstellationBand,
            reception_time: ReceptionTime::Tag,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    pub window: usize,
    pub policy: DatasetPolicy,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self { window: 1, policy: DatasetPolicy::ClearOnly }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlr,
    #[default]
    Gbt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub model: ModelKind,
    pub train_size: usize,
    pub mlr: MlrParams,
    pub gbt: GbtParams,
    pub importance_repeats: usize,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Gbt,
            train_size: 2000,
            mlr: MlrParams::default(),
            gbt: GbtParams::default(),
            importance_repeats: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorSection {
    pub h_fraction: f64,
    pub min_samples: usize,
    pub grouping: ErrorGrouping,
    pub reweight: bool,
    pub mcd: FastMcdParams,
    pub histogram_bins: usize,
    pub histogram_range_m: f64,
}

impl Default for ErrorSection {
    fn default() -> Self {
        Self {
            h_fraction: 0.75,
            min_samples: 50,
            grouping: ErrorGrouping::PerClass,
            reweight: true,
            mcd: FastMcdParams::default(),
            histogram_bins: 80,
            histogram_range_m: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub no_signal_classes: Vec<EnvironmentClass>,
    pub no_signal_marker: String,
    /// Number of back-to-back replays of the journey schedule.
    pub repeat: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            no_signal_classes: vec![EnvironmentClass::Tunnel],
            no_signal_marker: "NO_SIGNAL".into(),
            repeat: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub epochs: usize,
    pub start_week: i32,
    pub start_sow: f64,
    /// Inject no local error at all.
    pub zero_error: bool,
    pub clock_offset_m: f64,
    pub clock_drift_m_per_s: f64,
    /// Receiver inter-system bias added to Galileo pseudoranges, m.
    pub galileo_bias_m: f64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub height_m: f64,
    pub speed_m_per_s: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            epochs: 7200,
            start_week: 2200,
            start_sow: 216_000.0,
            zero_error: false,
            clock_offset_m: 2500.0,
            clock_drift_m_per_s: 0.4,
            galileo_bias_m: 0.0,
            latitude_deg: 45.2,
            longitude_deg: 5.7,
            height_m: 220.0,
            speed_m_per_s: 25.0,
        }
    }
}

/// Every knob of the pipeline. Loaded from TOML; relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub signals: Vec<SignalConfig>,
    pub inputs: InputPaths,
    pub residuals: ResidualSection,
    pub features: FeatureSection,
    pub classifier: ClassifierSection,
    pub errors: ErrorSection,
    pub simulate: SimulateSection,
    pub synth: SynthSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            signals: SignalConfig::default_set(),
            inputs: InputPaths::default(),
            residuals: ResidualSection::default(),
            features: FeatureSection::default(),
            classifier: ClassifierSection::default(),
            errors: ErrorSection::default(),
            simulate: SimulateSection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        fix(&mut i.obs);
        fix(&mut i.nav);
        fix(&mut i.truth);
        for p in [&mut i.labels, &mut i.residuals, &mut i.features, &mut i.model, &mut i.error_models]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Points the observation inputs at a directory produced by `synth`.
    pub fn use_synth_inputs(&mut self, dir: &Path) {
        self.inputs.obs = dir.join("obs.csv");
        self.inputs.nav = dir.join("nav.rnx");
        self.inputs.truth = dir.join("truth.csv");
        self.inputs.labels = Some(dir.join("labels.csv"));
    }

    pub fn validate(&self) -> Result<()> {
        if self.signals.is_empty() {
            return Err(Error::Config("at least one signal must be configured".into()));
        }
        for s in &self.signals {
            if s.band.constellation() != s.constellation {
                return Err(Error::Config(format!("band {} does not belong to {}", s.band, s.constellation)));
            }
            if s.code.len() != 3 || !s.code.starts_with('C') {
                return Err(Error::Config(format!("'{}' is not a pseudorange code", s.code)));
            }
        }
        self.residual_config().validate()?;
        self.feature_layout()?;
        self.fit_config().validate()?;
        self.classifier.gbt.validate()?;
        if self.classifier.train_size == 0 {
            return Err(Error::Config("train_size must be positive".into()));
        }
        if self.errors.histogram_bins == 0 || !(self.errors.histogram_range_m > 0.0) {
            return Err(Error::Config("histogram needs bins and a positive range".into()));
        }
        if self.simulate.repeat == 0 {
            return Err(Error::Config("simulate.repeat must be at least 1".into()));
        }
        let s = &self.synth;
        if s.epochs < 2 || !(0.0..100.0).contains(&s.speed_m_per_s) {
            return Err(Error::Config("synth needs at least 2 epochs and a speed below 100 m/s".into()));
        }
        Ok(())
    }

    /// Short hex digest of the canonical serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn residual_config(&self) -> ResidualConfig {
        let r = &self.residuals;
        ResidualConfig {
            elevation_cutoff: r.elevation_cutoff_deg.to_radians(),
            tropo: r.tropo.then_some(TropoModel { relative_humidity: r.relative_humidity }),
            iono_policy: r.iono_policy,
            clock_grouping: r.clock_grouping,
            reception_time: r.reception_time,
        }
    }

    pub fn feature_layout(&self) -> Result<FeatureLayout> {
        let pairs: Vec<(Constellation, Band)> = self.signals.iter().map(|s| (s.constellation, s.band)).collect();
        FeatureLayout::new(&pairs, self.residuals.elevation_cutoff_deg.to_radians(), self.features.window)
    }

    pub fn fit_config(&self) -> FitConfig {
        let e = &self.errors;
        FitConfig {
            grouping: e.grouping,
            h_fraction: e.h_fraction,
            min_samples: e.min_samples,
            reweight: e.reweight,
            mcd: e.mcd,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn partial_file_and_errors() {
        let cfg = PipelineConfig::from_toml(
            "seed = 9\n[residuals]\nelevation_cutoff_deg = 10.0\nclock_grouping = \"joint\"\n[classifier]\nmodel = \"mlr\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.classifier.model, ModelKind::Mlr);
        assert_eq!(cfg.residuals.clock_grouping, ClockGrouping::Joint);
        assert_ne!(cfg.hash(), PipelineConfig::default().hash());
        assert!(PipelineConfig::from_toml("[residuals]\nelevation_cutoff_deg = 1.0\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[errors]\nh_fraction = 0.2\n").is_err());
    }
}
