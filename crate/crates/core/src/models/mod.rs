//! Tree-ensemble learners and the cross-validation harness.
//!
//! Regression uses extremely randomized trees; classification uses gradient
//! boosting by default with extremely randomized trees as an alternative.
//! All learners are deterministic for a given seed.

pub mod cv;
pub mod extratrees;
pub mod gbdt;
pub mod metrics;
pub mod report;
pub mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{run_experiment, CVReport, CellResult, ExperimentConfig, MetricSummary, Task, TaskKind};
pub use extratrees::ExtraTreesParams;
pub use gbdt::GbdtParams;
pub use metrics::{metrics_classification, metrics_regression, ClassificationMetrics, RegressionMetrics};
pub use tree::{Node, Tree};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {expected} values, found {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("need at least {need} samples, found {found}")]
    TooFewSamples { need: usize, found: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("R² undefined: validation targets are constant")]
    UndefinedR2,
    #[error("probability row sums to {0}, not 1")]
    InvalidProbabilities(f64),
    #[error("k must be at least 2, got {0}")]
    InvalidFolds(usize),
    #[error("model kind {0:?} does not support this operation")]
    WrongKind(ModelKind),
    #[error("train/validation overlap in fold {fold}: {ids:?}")]
    Leakage { fold: usize, ids: Vec<String> },
    #[error("task {task} has no targets")]
    NoTargets { task: String },
    #[error("model file {path}: {reason}")]
    Format { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ExtratreesRegressor,
    ExtratreesClassifier,
    GbdtClassifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    Gbdt,
    Extratrees,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub extratrees: ExtraTreesParams,
    pub gbdt: GbdtParams,
    pub classifier: ClassifierKind,
}

/// Training labels: real targets or ordinal levels.
#[derive(Debug, Clone, Copy)]
pub enum TrainTarget<'a> {
    Regression(&'a [f64]),
    Classification(&'a [usize]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub n_features: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
    /// Severity levels in output order; empty for regression.
    pub classes: Vec<usize>,
    /// Per-output starting score (gbdt log-priors; zero otherwise).
    pub init: Vec<f64>,
    pub learning_rate: f64,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub trees: Vec<Tree>,
}

fn check_matrix(x: &[Vec<f64>], n_features: Option<usize>) -> Result<usize, ModelError> {
    let d = n_features.unwrap_or_else(|| x.first().map_or(0, Vec::len));
    for (r, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { row: r, col: c });
        }
    }
    Ok(d)
}

pub(crate) fn transpose(x: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

/// Per-class weights `N / (K · n_c)`, keyed by class.
pub fn class_weights(labels: &[usize]) -> Result<BTreeMap<usize, f64>, ModelError> {
    if labels.is_empty() {
        return Err(ModelError::Empty("label vector"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let n = labels.len() as f64;
    let k = counts.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(c, nc)| (c, n / (k * nc as f64)))
        .collect())
}

pub fn sample_weights(labels: &[usize]) -> Result<Vec<f64>, ModelError> {
    let w = class_weights(labels)?;
    Ok(labels.iter().map(|l| w[l]).collect())
}

/// Stratified fold index per sample. Each class is shuffled and dealt
/// round-robin, continuing from where the previous class stopped, so per-class
/// counts differ by at most one across folds. Classes smaller than `k` are
/// dealt the same way and reported in the returned warnings.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<(Vec<usize>, Vec<String>), ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidFolds(k));
    }
    if labels.len() < k {
        return Err(ModelError::TooFewSamples {
            need: k,
            found: labels.len(),
        });
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut warnings = Vec::new();
    let mut next = 0;
    for (class, mut members) in by_class {
        if members.len() < k {
            warnings.push(format!(
                "class {class} has {} members for {k} folds; spread round-robin",
                members.len()
            ));
        }
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok((folds, warnings))
}

fn encode(labels: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let encoded = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label listed"))
        .collect();
    (classes, encoded)
}

/// Trains one ensemble. Sample weights default to 1.
pub fn train(
    x: &[Vec<f64>],
    target: TrainTarget,
    kind: ModelKind,
    params: &Hyperparameters,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<(TreeEnsembleModel, Vec<String>), ModelError> {
    let n = x.len();
    if n < 2 {
        return Err(ModelError::TooFewSamples { need: 2, found: n });
    }
    let d = check_matrix(x, None)?;
    let tn = match target {
        TrainTarget::Regression(y) => y.len(),
        TrainTarget::Classification(y) => y.len(),
    };
    if tn != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            actual: tn,
        });
    }
    let ones = vec![1.0; n];
    let w = weights.unwrap_or(&ones);
    if w.len() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            actual: w.len(),
        });
    }
    let cols = transpose(x, d);
    let mut warnings = Vec::new();
    let mut model = TreeEnsembleModel {
        format_version: MODEL_FORMAT_VERSION,
        kind,
        n_features: d,
        feature_names: Vec::new(),
        classes: Vec::new(),
        init: Vec::new(),
        learning_rate: 1.0,
        seed,
        hyperparameters: params.clone(),
        trees: Vec::new(),
    };
    match (kind, target) {
        (ModelKind::ExtratreesRegressor, TrainTarget::Regression(y)) => {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { row: 0, col: d });
            }
            if y.iter().all(|v| *v == y[0]) {
                warnings.push("constant regression target; model predicts the constant".into());
            }
            model.init = vec![0.0];
            model.trees = extratrees::fit(&cols, extratrees::Response::Regression(y), w, &params.extratrees, seed);
        }
        (ModelKind::ExtratreesClassifier, TrainTarget::Classification(labels)) => {
            let (classes, enc) = encode(labels);
            let k = classes.len();
            model.init = vec![0.0; k];
            model.classes = classes;
            model.trees = extratrees::fit(
                &cols,
                extratrees::Response::Classification { labels: &enc, k },
                w,
                &params.extratrees,
                seed,
            );
        }
        (ModelKind::GbdtClassifier, TrainTarget::Classification(labels)) => {
            let (classes, enc) = encode(labels);
            if classes.len() < 2 {
                warnings.push("single class in training data; model predicts it with certainty".into());
            }
            let (init, trees) = gbdt::fit(&cols, &enc, classes.len(), w, &params.gbdt);
            model.classes = classes;
            model.init = init;
            model.learning_rate = params.gbdt.learning_rate;
            model.trees = trees;
        }
        _ => return Err(ModelError::WrongKind(kind)),
    }
    Ok((model, warnings))
}

impl TreeEnsembleModel {
    pub fn n_outputs(&self) -> usize {
        match self.kind {
            ModelKind::ExtratreesRegressor => 1,
            _ => self.classes.len(),
        }
    }

    /// Output index a tree contributes to, or `None` when it feeds all outputs.
    pub fn tree_output(&self, t: usize) -> Option<usize> {
        match self.kind {
            ModelKind::GbdtClassifier => Some(t % self.classes.len().max(1)),
            _ => None,
        }
    }

    /// Weight applied to each tree's output when summing the ensemble.
    pub fn tree_scale(&self) -> f64 {
        match self.kind {
            ModelKind::GbdtClassifier => 1.0,
            _ => 1.0 / self.trees.len().max(1) as f64,
        }
    }

    /// Additive raw output: the mean tree output for extremely randomized
    /// trees, pre-softmax class scores for boosting.
    pub fn predict_raw(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        let mut out = self.init.clone();
        let scale = self.tree_scale();
        for (t, tree) in self.trees.iter().enumerate() {
            let v = tree.predict(x);
            match self.tree_output(t) {
                Some(o) => out[o] += v[0] * scale,
                None => {
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += vi * scale;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        if self.kind != ModelKind::ExtratreesRegressor {
            return Err(ModelError::WrongKind(self.kind));
        }
        Ok(self.predict_raw(x)?[0])
    }

    /// Class probabilities in `classes` order.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        let raw = self.predict_raw(x)?;
        match self.kind {
            ModelKind::ExtratreesRegressor => Err(ModelError::WrongKind(self.kind)),
            ModelKind::ExtratreesClassifier => Ok(raw),
            ModelKind::GbdtClassifier => {
                if raw.len() == 1 {
                    Ok(vec![1.0])
                } else {
                    Ok(gbdt::softmax(&raw))
                }
            }
        }
    }

    pub fn predict_many(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        x.iter().map(|r| self.predict(r)).collect()
    }

    pub fn predict_proba_many(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ModelError> {
        x.iter().map(|r| self.predict_proba(r)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::Format {
            path: path.display().to_string(),
            reason,
        };
        let json = serde_json::to_string(self).map_err(|e| fail(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| fail(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let fail = |reason: String| ModelError::Format {
            path: path.display().to_string(),
            reason,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| fail(e.to_string()))?;
        let model: TreeEnsembleModel = serde_json::from_str(&raw).map_err(|e| fail(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(fail(format!("unsupported format version {}", model.format_version)));
        }
        for (t, tree) in model.trees.iter().enumerate() {
            tree.validate().map_err(|e| fail(format!("tree {t}: {e}")))?;
        }
        Ok(model)
    }
}
