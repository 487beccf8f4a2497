//! Environment classifiers: multinomial logistic regression and gradient
//! boosted trees, with cross-validation, confusion matrices and permutation
//! feature importance.

mod gbt;
mod mlr;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{EnvironmentClass, FeatureSchema, FeatureVector, LabeledSample};
use crate::{Error, Result};

pub use gbt::{GbtFit, GbtModel, GbtParams, Node, Tree};
pub use mlr::{loss_and_gradient, MlrFit, MlrModel};

pub const MODEL_FORMAT_VERSION: u32 = 1;
const MIN_SAMPLES_PER_CLASS: usize = 10;

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-feature centering and scaling fitted on training data. Masked values
/// are imputed with the training mean, i.e. zero after scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a FeatureVector>, width: usize) -> Self {
        let mut n = vec![0usize; width];
        let mut sum = vec![0.0; width];
        let mut sq = vec![0.0; width];
        let rows: Vec<&FeatureVector> = rows.into_iter().collect();
        for r in &rows {
            for j in 0..width {
                if let Some(v) = r.get(j) {
                    n[j] += 1;
                    sum[j] += v;
                }
            }
        }
        let mean: Vec<f64> = (0..width).map(|j| if n[j] > 0 { sum[j] / n[j] as f64 } else { 0.0 }).collect();
        for r in &rows {
            for j in 0..width {
                if let Some(v) = r.get(j) {
                    sq[j] += (v - mean[j]).powi(2);
                }
            }
        }
        let mut constant = vec![false; width];
        let std = (0..width)
            .map(|j| {
                let s = if n[j] > 1 { (sq[j] / (n[j] - 1) as f64).sqrt() } else { 0.0 };
                if s > 1e-12 * mean[j].abs().max(1.0) {
                    s
                } else {
                    constant[j] = true;
                    1.0
                }
            })
            .collect();
        Self { mean, std, constant }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, fv: &FeatureVector) -> Vec<f64> {
        (0..self.width())
            .map(|j| fv.get(j).map_or(0.0, |v| (v - self.mean[j]) / self.std[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Mlr(MlrModel),
    Gbt(GbtModel),
}

impl Classifier {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Classifier::Mlr(m) => m.scores(row),
            Classifier::Gbt(m) => m.scores(row),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Classifier::Mlr(_) => "mlr",
            Classifier::Gbt(_) => "gbt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: EnvironmentClass,
    pub probabilities: Vec<f64>,
}

/// Persisted model: schema, standardizer, class list and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub schema: FeatureSchema,
    pub schema_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub classes: Vec<EnvironmentClass>,
    pub standardizer: Standardizer,
    pub classifier: Classifier,
}

impl ModelDocument {
    fn new(schema: &FeatureSchema, classes: Vec<EnvironmentClass>, standardizer: Standardizer, classifier: Classifier) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            schema_hash: schema.hash(),
            schema: schema.clone(),
            config_hash: None,
            classes,
            standardizer,
            classifier,
        }
    }

    pub fn check_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if schema.hash() != self.schema_hash {
            return Err(Error::InvalidInput(format!(
                "feature schema {} does not match the model's {}",
                schema.hash(),
                self.schema_hash
            )));
        }
        Ok(())
    }

    pub fn probabilities_row(&self, row: &[f64]) -> Vec<f64> {
        softmax(&self.classifier.scores(row))
    }

    pub fn predict(&self, fv: &FeatureVector) -> Result<Prediction> {
        if fv.len() != self.standardizer.width() {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} values, model expects {}",
                fv.len(),
                self.standardizer.width()
            )));
        }
        let probabilities = self.probabilities_row(&self.standardizer.transform(fv));
        Ok(Prediction { class: self.classes[argmax(&probabilities)], probabilities })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Self = serde_json::from_str(&text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!("unsupported model format version {}", doc.format_version)));
        }
        if doc.schema.hash() != doc.schema_hash {
            return Err(Error::InvalidInput("model schema hash does not match its schema".into()));
        }
        Ok(doc)
    }
}

/// Sorted class list and label indices. Fails on fewer than two classes.
pub fn class_index(samples: &[LabeledSample]) -> Result<(Vec<EnvironmentClass>, Vec<usize>)> {
    let mut classes: Vec<EnvironmentClass> = samples.iter().map(|s| s.class).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "training needs at least two classes, found {}",
            classes.len()
        )));
    }
    for c in &classes {
        let n = samples.iter().filter(|s| s.class == *c).count();
        if n < MIN_SAMPLES_PER_CLASS {
            log::warn!("class {} has only {n} training samples", c.name());
        }
    }
    let y = samples
        .iter()
        .map(|s| classes.binary_search(&s.class).expect("class listed"))
        .collect();
    Ok((classes, y))
}

fn design_matrix(st: &Standardizer, samples: &[&LabeledSample]) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| st.transform(&s.features)).collect();
    DMatrix::from_fn(rows.len(), st.width(), |i, j| rows[i][j])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlrParams {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub max_iter: usize,
}

impl Default for MlrParams {
    fn default() -> Self {
        Self {
            lambda_grid: (0..7).map(|k| 10f64.powi(k - 4)).collect(),
            folds: 5,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lambdas: Vec<f64>,
    pub mean_accuracy: Vec<f64>,
    pub chosen_lambda: f64,
    /// Objective after each accepted step of the final refit.
    pub final_loss_history: Vec<f64>,
}

fn seeded(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng
}

/// Fits the standardizer and an MLR on `train` for one lambda.
fn fit_mlr(train: &[&LabeledSample], classes: &[EnvironmentClass], lambda: f64, max_iter: usize, width: usize) -> Result<(Standardizer, MlrFit)> {
    let st = Standardizer::fit(train.iter().map(|s| &s.features), width);
    let x = design_matrix(&st, train);
    let y: Vec<usize> = train.iter().map(|s| classes.binary_search(&s.class).expect("class listed")).collect();
    let fit = mlr::fit(&x, &y, classes.len(), lambda, max_iter)?;
    Ok((st, fit))
}

/// Chooses lambda by k-fold validation accuracy (ties toward larger lambda),
/// then refits on all of `samples`.
pub fn mlr_train(samples: &[LabeledSample], schema: &FeatureSchema, params: &MlrParams, seed: u64) -> Result<(ModelDocument, CvReport)> {
    let (classes, _) = class_index(samples)?;
    if params.lambda_grid.is_empty() || params.lambda_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Config("lambda grid must be non-empty and non-negative".into()));
    }
    if params.folds < 2 || params.folds > samples.len() {
        return Err(Error::Config(format!("cannot run {}-fold validation on {} samples", params.folds, samples.len())));
    }
    let width = schema.len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut seeded(seed, 1, 0));
    let fold_of: Vec<usize> = {
        let mut f = vec![0; samples.len()];
        for (pos, &i) in order.iter().enumerate() {
            f[i] = pos % params.folds;
        }
        f
    };
    let mut grid = params.lambda_grid.clone();
    grid.sort_by(f64::total_cmp);
    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|l| (0..params.folds).map(move |f| (l, f))).collect();
    let correct = tasks
        .par_iter()
        .map(|&(l, fold)| {
            let train: Vec<&LabeledSample> = samples.iter().zip(&fold_of).filter(|(_, f)| **f != fold).map(|(s, _)| s).collect();
            let valid: Vec<&LabeledSample> = samples.iter().zip(&fold_of).filter(|(_, f)| **f == fold).map(|(s, _)| s).collect();
            let mut train_classes: Vec<EnvironmentClass> = train.iter().map(|s| s.class).collect();
            train_classes.sort();
            train_classes.dedup();
            let (st, fit) = fit_mlr(&train, &train_classes, grid[l], params.max_iter, width)?;
            Ok(valid
                .iter()
                .filter(|s| train_classes[argmax(&fit.model.scores(&st.transform(&s.features)))] == s.class)
                .count())
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut totals = vec![0usize; grid.len()];
    for ((l, _), c) in tasks.iter().zip(&correct) {
        totals[*l] += c;
    }
    let mut best = 0;
    for l in 0..grid.len() {
        if totals[l] >= totals[best] {
            best = l;
        }
    }
    let all: Vec<&LabeledSample> = samples.iter().collect();
    let (st, fit) = fit_mlr(&all, &classes, grid[best], params.max_iter, width)?;
    let report = CvReport {
        mean_accuracy: totals.iter().map(|&t| t as f64 / samples.len() as f64).collect(),
        lambdas: grid.clone(),
        chosen_lambda: grid[best],
        final_loss_history: fit.loss_history,
    };
    Ok((ModelDocument::new(schema, classes, st, Classifier::Mlr(fit.model)), report))
}

/// Boosted trees on standardized, mean-imputed features. Training is
/// deterministic; `seed` is accepted for interface symmetry.
pub fn gbt_train(samples: &[LabeledSample], schema: &FeatureSchema, params: &GbtParams, _seed: u64) -> Result<(ModelDocument, Vec<f64>)> {
    let (classes, y) = class_index(samples)?;
    let st = Standardizer::fit(samples.iter().map(|s| &s.features), schema.len());
    let x: Vec<Vec<f64>> = samples.iter().map(|s| st.transform(&s.features)).collect();
    let fit = gbt::fit(&x, &y, classes.len(), params)?;
    Ok((ModelDocument::new(schema, classes, st, Classifier::Gbt(fit.model)), fit.loss_history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<EnvironmentClass>,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let diag: usize = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        diag as f64 / self.total() as f64
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        let row: usize = self.counts[k].iter().sum();
        (row > 0).then(|| self.counts[k][k] as f64 / row as f64)
    }

    pub fn precision(&self, k: usize) -> Option<f64> {
        let col: usize = self.counts.iter().map(|r| r[k]).sum();
        (col > 0).then(|| self.counts[k][k] as f64 / col as f64)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.iter().map(|c| c.name().to_string()));
        w.write_record(&header)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![c.name().to_string()];
            rec.extend(row.iter().map(usize::to_string));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn confusion(classes: &[EnvironmentClass], truth: &[EnvironmentClass], predicted: &[EnvironmentClass]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let idx = |c: &EnvironmentClass| {
        classes
            .iter()
            .position(|k| k == c)
            .ok_or_else(|| Error::InvalidInput(format!("label {} not in class list", c.name())))
    };
    let mut counts = vec![vec![0; classes.len()]; classes.len()];
    for (t, p) in truth.iter().zip(predicted) {
        counts[idx(t)?][idx(p)?] += 1;
    }
    Ok(ConfusionMatrix { classes: classes.to_vec(), counts })
}

/// Predicts every sample and tabulates against its label. The class list is
/// the union of the model's classes and any label only seen in `samples`.
pub fn evaluate(model: &ModelDocument, samples: &[LabeledSample]) -> Result<ConfusionMatrix> {
    let predicted = samples
        .iter()
        .map(|s| model.predict(&s.features).map(|p| p.class))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<EnvironmentClass> = samples.iter().map(|s| s.class).collect();
    let mut classes = model.classes.clone();
    classes.extend(truth.iter().copied());
    classes.sort();
    classes.dedup();
    confusion(&classes, &truth, &predicted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_drop: f64,
    pub std_drop: f64,
}

fn accuracy_rows(model: &ModelDocument, rows: &[Vec<f64>], labels: &[EnvironmentClass]) -> f64 {
    let ok = rows
        .iter()
        .zip(labels)
        .filter(|(r, c)| model.classes[argmax(&model.classifier.scores(r))] == **c)
        .count();
    ok as f64 / rows.len() as f64
}

/// Mean accuracy drop when one feature column is shuffled, sorted descending.
pub fn permutation_importance(model: &ModelDocument, samples: &[LabeledSample], n_repeats: usize, seed: u64) -> Result<Vec<FeatureImportance>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("permutation importance needs test samples".into()));
    }
    let rows: Vec<Vec<f64>> = samples.iter().map(|s| model.standardizer.transform(&s.features)).collect();
    let labels: Vec<EnvironmentClass> = samples.iter().map(|s| s.class).collect();
    let base = accuracy_rows(model, &rows, &labels);
    let width = model.standardizer.width();
    let mut out: Vec<FeatureImportance> = (0..width)
        .into_par_iter()
        .map(|j| {
            let drops: Vec<f64> = (0..n_repeats)
                .map(|r| {
                    let mut col: Vec<f64> = rows.iter().map(|row| row[j]).collect();
                    col.shuffle(&mut seeded(seed, j as u64 + 2, r as u64));
                    let permuted: Vec<Vec<f64>> = rows
                        .iter()
                        .zip(&col)
                        .map(|(row, v)| {
                            let mut row = row.clone();
                            row[j] = *v;
                            row
                        })
                        .collect();
                    base - accuracy_rows(model, &permuted, &labels)
                })
                .collect();
            let n = drops.len().max(1) as f64;
            let mean = drops.iter().sum::<f64>() / n;
            let var = drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
            FeatureImportance { feature: model.schema.names[j].clone(), mean_drop: mean, std_drop: var.sqrt() }
        })
        .collect();
    out.sort_by(|a, b| b.mean_drop.total_cmp(&a.mean_drop));
    Ok(out)
}

pub fn write_importance_csv<W: Write>(writer: W, report: &[FeatureImportance]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "mean_accuracy_drop", "std_accuracy_drop"])?;
    for f in report {
        w.write_record([f.feature.clone(), f.mean_drop.to_string(), f.std_drop.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
