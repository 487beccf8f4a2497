//! One driver per subcommand. Each reads its inputs from the config, writes
//! its outputs under `out` and a `<command>.report.json` carrying the config
//! and its hash.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use super::synth::{generate, TruthModels};
use super::{ModelKind, PipelineConfig};
use crate::classify::{
    evaluate, gbt_train, mlr_train, permutation_importance, write_importance_csv, CvReport, ModelDocument,
};
use crate::context::{
    build_dataset_labeled, featurize_journey, read_features_csv, split, write_features_csv, DatasetReport,
    EnvironmentClass, FeaturesTable, LabeledSample,
};
use crate::errormodel::{
    fit_error_models, histogram, sample_errors, write_errors_csv, write_histogram_csv, ErrorModelSet, ScheduleEntry,
    ScheduleEpoch,
};
use crate::geodesy::EphemerisStore;
use crate::ingest::{
    align, parse_ground_truth, parse_labels, parse_nav, read_observations, write_labels_csv, write_obs_csv,
    write_truth_csv, AlignReport, AlignedEpoch, LabelTimeline, NavData, ObservationEpoch, ParseReport,
};
use crate::residuals::{epoch_geometry, read_residuals_csv, residual_dataset, write_residuals_csv, ResidualReport, ResidualSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Extract,
    Featurize,
    Train,
    Evaluate,
    FitErrors,
    Simulate,
    Synth,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Extract => "extract",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::FitErrors => "fit-errors",
            Command::Simulate => "simulate",
            Command::Synth => "synth",
        }
    }
}

/// Runs one subcommand. Returns the paths written.
pub fn run(command: Command, cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match command {
        Command::Extract => cmd_extract(cfg, out),
        Command::Featurize => cmd_featurize(cfg, out),
        Command::Train => cmd_train(cfg, out),
        Command::Evaluate => cmd_evaluate(cfg, out),
        Command::FitErrors => cmd_fit_errors(cfg, out),
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Synth => cmd_synth(cfg, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    config: &'a PipelineConfig,
    outputs: Vec<String>,
    report: T,
}

fn write_report<T: Serialize>(cfg: &PipelineConfig, out: &Path, command: Command, mut outputs: Vec<PathBuf>, report: T) -> Result<Vec<PathBuf>> {
    let path = out.join(format!("{}.report.json", command.name()));
    let names = outputs
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
        .collect();
    write_json(
        &path,
        &Report { command: command.name(), config_hash: cfg.hash(), config: cfg, outputs: names, report },
    )?;
    outputs.push(path);
    Ok(outputs)
}

fn or_out(configured: &Option<PathBuf>, out: &Path, name: &str) -> PathBuf {
    configured.clone().unwrap_or_else(|| out.join(name))
}

struct Journey {
    parse: ParseReport,
    nav: NavData,
    store: EphemerisStore,
    align: AlignReport,
    epochs: Vec<AlignedEpoch>,
}

fn load_labels(cfg: &PipelineConfig) -> Result<Option<LabelTimeline>> {
    cfg.inputs.labels.as_deref().map(parse_labels).transpose()
}

fn load_journey(cfg: &PipelineConfig) -> Result<Journey> {
    let obs = read_observations(&cfg.inputs.obs, &cfg.signals)?;
    let nav = parse_nav(&cfg.inputs.nav)?;
    let track = parse_ground_truth(&cfg.inputs.truth)?;
    let labels = load_labels(cfg)?;
    if obs.epochs.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no usable observation epochs", cfg.inputs.obs.display())));
    }
    let first = obs.epochs[0].time;
    let last = obs.epochs[obs.epochs.len() - 1].time;
    let alignment = align(obs.epochs, &track, labels.as_ref());
    if alignment.epochs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no overlap between observation span [{first} .. {last}] and truth span [{} .. {}]",
            track.start(),
            track.end()
        )));
    }
    let store = EphemerisStore::new(nav.ephemerides.iter().cloned());
    Ok(Journey { parse: obs.report, nav, store, align: alignment.report, epochs: alignment.epochs })
}

#[derive(Serialize)]
struct ExtractReport {
    observations: ParseReport,
    ephemerides: usize,
    iono_present: bool,
    alignment: AlignReport,
    residuals: ResidualReport,
}

pub fn cmd_extract(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let j = load_journey(cfg)?;
    let data = residual_dataset(&j.epochs, &j.store, j.nav.iono.as_ref(), &cfg.residual_config())?;
    let samples: Vec<ResidualSample> = data.records().map(|r| r.sample()).collect();
    let path = out.join("residuals.csv");
    write_residuals_csv(create(&path)?, &samples)?;
    info!("{} residuals from {} epochs", samples.len(), data.report.epochs_processed);
    write_report(
        cfg,
        out,
        Command::Extract,
        vec![path],
        ExtractReport {
            observations: j.parse,
            ephemerides: j.store.len(),
            iono_present: j.nav.iono.is_some(),
            alignment: j.align,
            residuals: data.report,
        },
    )
}

#[derive(Serialize)]
struct FeaturizeReport {
    alignment: AlignReport,
    rows: usize,
    schema_hash: String,
    features: usize,
    per_class: BTreeMap<String, usize>,
}

pub fn cmd_featurize(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let layout = cfg.feature_layout()?;
    let j = load_journey(cfg)?;
    let items = j
        .epochs
        .par_iter()
        .map(|a| Ok((a.epoch.clone(), epoch_geometry(&a.epoch, &j.store, &a.truth)?)))
        .collect::<Result<Vec<_>>>()?;
    let vectors = featurize_journey(&items, &layout);
    let table = FeaturesTable {
        schema: layout.schema(),
        rows: vectors.into_iter().zip(j.epochs.iter().map(|a| a.class)).collect(),
    };
    let mut per_class: BTreeMap<String, usize> = BTreeMap::new();
    for (_, c) in &table.rows {
        *per_class.entry(c.map_or("unlabeled", |c| c.name()).to_string()).or_default() += 1;
    }
    let path = out.join("features.csv");
    write_features_csv(create(&path)?, &table)?;
    write_report(
        cfg,
        out,
        Command::Featurize,
        vec![path],
        FeaturizeReport {
            alignment: j.align,
            rows: table.rows.len(),
            schema_hash: table.schema.hash(),
            features: table.schema.len(),
            per_class,
        },
    )
}

/// Labeled train and test samples, reproducible from the config seed.
pub fn load_split(cfg: &PipelineConfig, out: &Path) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>, DatasetReport, FeaturesTable)> {
    let path = or_out(&cfg.inputs.features, out, "features.csv");
    let table = read_features_csv(open(&path)?, &path)?;
    let expected = cfg.feature_layout()?.schema();
    if table.schema != expected {
        return Err(Error::InvalidInput(format!(
            "{}: feature schema {} does not match the configured schema {}",
            path.display(),
            table.schema.hash(),
            expected.hash()
        )));
    }
    let (samples, report) = build_dataset_labeled(table.rows.clone(), cfg.features.policy)?;
    let (train, test) = split(&samples, cfg.classifier.train_size, cfg.seed)?;
    Ok((train, test, report, table))
}

#[derive(Serialize)]
struct TrainReport {
    dataset: DatasetReport,
    train: usize,
    test: usize,
    model: ModelKind,
    classes: Vec<EnvironmentClass>,
    cross_validation: Option<CvReport>,
    loss_history: Vec<f64>,
    loss_monotone: bool,
    train_accuracy: f64,
}

pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let (train, test, dataset, table) = load_split(cfg, out)?;
    let (mut doc, cv, history) = match cfg.classifier.model {
        ModelKind::Mlr => {
            let (doc, cv) = mlr_train(&train, &table.schema, &cfg.classifier.mlr, cfg.seed)?;
            let h = cv.final_loss_history.clone();
            (doc, Some(cv), h)
        }
        ModelKind::Gbt => {
            let (doc, h) = gbt_train(&train, &table.schema, &cfg.classifier.gbt, cfg.seed)?;
            (doc, None, h)
        }
    };
    doc.config_hash = Some(cfg.hash());
    let path = out.join("model.json");
    doc.save(&path)?;
    let train_accuracy = evaluate(&doc, &train)?.accuracy();
    info!("trained {:?} on {} samples, train accuracy {train_accuracy:.4}", cfg.classifier.model, train.len());
    write_report(
        cfg,
        out,
        Command::Train,
        vec![path],
        TrainReport {
            dataset,
            train: train.len(),
            test: test.len(),
            model: cfg.classifier.model,
            classes: doc.classes.clone(),
            cross_validation: cv,
            loss_monotone: history.windows(2).all(|w| w[1] <= w[0]),
            loss_history: history,
            train_accuracy,
        },
    )
}

#[derive(Serialize)]
struct ClassScores {
    support: usize,
    recall: Option<f64>,
    precision: Option<f64>,
}

#[derive(Serialize)]
struct EvaluateReport {
    test: usize,
    accuracy: f64,
    per_class: BTreeMap<String, ClassScores>,
}

pub fn cmd_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let model_path = or_out(&cfg.inputs.model, out, "model.json");
    let doc = ModelDocument::load(&model_path)?;
    let (_, test, _, table) = load_split(cfg, out)?;
    doc.check_schema(&table.schema)?;
    let cm = evaluate(&doc, &test)?;
    let importance = permutation_importance(&doc, &test, cfg.classifier.importance_repeats, cfg.seed)?;
    let cm_path = out.join("confusion.csv");
    cm.write_csv(create(&cm_path)?)?;
    let imp_path = out.join("importance.csv");
    write_importance_csv(create(&imp_path)?, &importance)?;
    let per_class = cm
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scores = ClassScores { support: cm.counts[k].iter().sum(), recall: cm.recall(k), precision: cm.precision(k) };
            (c.name().to_string(), scores)
        })
        .collect();
    info!("test accuracy {:.4} on {} samples", cm.accuracy(), cm.total());
    write_report(
        cfg,
        out,
        Command::Evaluate,
        vec![cm_path, imp_path],
        EvaluateReport { test: test.len(), accuracy: cm.accuracy(), per_class },
    )
}

fn file_stem(key: &str) -> String {
    key.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

#[derive(Serialize)]
struct FitReport {
    samples: usize,
    models: usize,
    too_small: BTreeMap<String, usize>,
}

pub fn cmd_fit_errors(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let path = or_out(&cfg.inputs.residuals, out, "residuals.csv");
    let samples = read_residuals_csv(open(&path)?, &path)?;
    let mut set = fit_error_models(&samples, &cfg.fit_config(), cfg.seed)?;
    set.config_hash = Some(cfg.hash());
    let model_path = out.join("error_models.json");
    set.save(&model_path)?;
    let mut outputs = vec![model_path];

    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for s in &samples {
        let key = set.key_for(s.class, s.satellite.constellation, s.band).to_string();
        groups.entry(key).or_default().push(s.epsilon_m);
    }
    let range = cfg.errors.histogram_range_m;
    for (key, model) in &set.models {
        let values = groups.get(key).map(Vec::as_slice).unwrap_or(&[]);
        let bins = histogram(values, -range, range, cfg.errors.histogram_bins)?;
        let hist_path = out.join("histograms").join(format!("{}.csv", file_stem(key)));
        write_histogram_csv(create(&hist_path)?, &bins, model)?;
        outputs.push(hist_path);
    }
    info!("fitted {} error models from {} residuals", set.models.len(), samples.len());
    write_report(
        cfg,
        out,
        Command::FitErrors,
        outputs,
        FitReport { samples: samples.len(), models: set.models.len(), too_small: set.too_small.clone() },
    )
}

/// Error-injection schedule: observed signals of each epoch with its label,
/// replayed `repeat` times back to back.
pub fn journey_schedule(epochs: &[ObservationEpoch], labels: Option<&LabelTimeline>, repeat: usize) -> Vec<ScheduleEpoch> {
    let Some(first) = epochs.first() else { return Vec::new() };
    let span = epochs[epochs.len() - 1].time.seconds_since(&first.time) + 1.0;
    (0..repeat)
        .flat_map(|r| {
            epochs.iter().map(move |e| ScheduleEpoch {
                time: e.time.add_seconds(r as f64 * span),
                class: labels.and_then(|l| l.class_at(e.time)),
                signals: e.observations.iter().map(|o| ScheduleEntry { satellite: o.satellite, band: o.band }).collect(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct StreamStats {
    samples: usize,
    no_signal_rows: usize,
    mean_m: f64,
    var_m2: f64,
}

#[derive(Serialize)]
struct SimulateReport {
    epochs: usize,
    rows: usize,
    per_key: BTreeMap<String, StreamStats>,
}

pub fn cmd_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let models = ErrorModelSet::load(&or_out(&cfg.inputs.error_models, out, "error_models.json"))?;
    let obs = read_observations(&cfg.inputs.obs, &cfg.signals)?;
    let labels = load_labels(cfg)?;
    let schedule = journey_schedule(&obs.epochs, labels.as_ref(), cfg.simulate.repeat);
    let stream = sample_errors(&models, &schedule, cfg.seed, &cfg.simulate.no_signal_classes)?;
    let path = out.join("injected_errors.csv");
    write_errors_csv(create(&path)?, &stream, &cfg.simulate.no_signal_marker)?;

    let mut acc: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
    for s in &stream {
        let key = models.key_for(s.class, s.satellite.constellation, s.band).to_string();
        let entry = acc.entry(key).or_default();
        match s.error_m {
            Some(v) => entry.1.push(v),
            None => entry.0 += 1,
        }
    }
    let per_key = acc
        .into_iter()
        .map(|(k, (silent, v))| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n.max(1.0);
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (k, StreamStats { samples: v.len(), no_signal_rows: silent, mean_m: mean, var_m2: var })
        })
        .collect();
    info!("{} injected error rows over {} epochs", stream.len(), schedule.len());
    write_report(
        cfg,
        out,
        Command::Simulate,
        vec![path],
        SimulateReport { epochs: schedule.len(), rows: stream.len(), per_key },
    )
}

#[derive(Serialize)]
struct SynthReport {
    epochs: usize,
    observations: usize,
    ephemerides: usize,
    truth_models: TruthModels,
}

pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let scen = generate(cfg)?;
    let obs = out.join("obs.csv");
    write_obs_csv(create(&obs)?, &scen.epochs)?;
    let nav = out.join("nav.rnx");
    let mut w = create(&nav)?;
    w.write_all(scen.nav_text.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&nav, e))?;
    let truth = out.join("truth.csv");
    write_truth_csv(create(&truth)?, &scen.truth)?;
    let labels = out.join("labels.csv");
    write_labels_csv(create(&labels)?, &scen.labels)?;
    let models = out.join("truth_models.json");
    write_json(&models, &scen.truth_models)?;
    // a config that runs the rest of the pipeline on these files
    let mut next = cfg.clone();
    next.inputs = Default::default();
    let config = out.join("config.toml");
    let mut w = create(&config)?;
    w.write_all(next.to_toml().as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&config, e))?;
    info!("synthetic journey of {} epochs", scen.epochs.len());
    write_report(
        cfg,
        out,
        Command::Synth,
        vec![obs, nav, truth, labels, models, config],
        SynthReport {
            epochs: scen.epochs.len(),
            observations: scen.epochs.iter().map(|e| e.observations.len()).sum(),
            ephemerides: scen.nav.ephemerides.len(),
            truth_models: scen.truth_models,
        },
    )
}
