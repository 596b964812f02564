//! Stratified k-fold evaluation over every task × feature-combination cell.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_sd, metrics_classification, metrics_regression};
use super::{
    sample_weights, stratified_kfold, train, ClassifierKind, Hyperparameters, ModelError, ModelKind,
    TrainTarget, TreeEnsembleModel,
};
use crate::corpus::Condition;
use crate::featureset::{select_combo, FeatureCombo, FeatureMatrix};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Task {
    pub condition: Condition,
    pub kind: TaskKind,
}

impl Task {
    pub const fn new(condition: Condition, kind: TaskKind) -> Self {
        Task { condition, kind }
    }

    /// Depression and anxiety regression, then classification for all three
    /// conditions. Trauma has no regression task.
    pub fn defaults() -> Vec<Task> {
        vec![
            Task::new(Condition::Depression, TaskKind::Regression),
            Task::new(Condition::Anxiety, TaskKind::Regression),
            Task::new(Condition::Depression, TaskKind::Classification),
            Task::new(Condition::Anxiety, TaskKind::Classification),
            Task::new(Condition::Trauma, TaskKind::Classification),
        ]
    }

    pub fn name(&self) -> String {
        let kind = match self.kind {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        };
        format!("{}_{kind}", self.condition.name())
    }

    /// Metric shown in the summary table.
    pub fn headline_metric(&self) -> &'static str {
        match self.kind {
            TaskKind::Regression => "r2",
            TaskKind::Classification => "auc_macro_ovr",
        }
    }

    pub fn metric_names(&self) -> &'static [&'static str] {
        match self.kind {
            TaskKind::Regression => &["r2", "rmse", "mae"],
            TaskKind::Classification => &["auc_macro_ovr", "balanced_accuracy", "macro_f1"],
        }
    }

    pub fn column_label(&self) -> String {
        let mut c = self.condition.name().to_string();
        c[..1].make_ascii_uppercase();
        match self.kind {
            TaskKind::Regression => format!("{c} R²"),
            TaskKind::Classification => format!("{c} AUC"),
        }
    }

    pub fn model_kind(&self, classifier: ClassifierKind) -> ModelKind {
        match (self.kind, classifier) {
            (TaskKind::Regression, _) => ModelKind::ExtratreesRegressor,
            (TaskKind::Classification, ClassifierKind::Gbdt) => ModelKind::GbdtClassifier,
            (TaskKind::Classification, ClassifierKind::Extratrees) => ModelKind::ExtratreesClassifier,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub k: usize,
    pub seed: u64,
    pub tasks: Vec<Task>,
    pub combos: Vec<FeatureCombo>,
    pub hyperparameters: Hyperparameters,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            k: 5,
            seed: 0,
            tasks: Task::defaults(),
            combos: FeatureCombo::ALL.to_vec(),
            hyperparameters: Hyperparameters::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub sd: f64,
    pub folds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: Task,
    pub combo: FeatureCombo,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub format_version: u32,
    pub seed: u64,
    pub k: usize,
    pub sample_ids: Vec<String>,
    /// Validation fold per sample and condition; `None` where the sample has
    /// no score for that condition.
    pub folds: BTreeMap<Condition, Vec<Option<usize>>>,
    pub tasks: Vec<Task>,
    pub combos: Vec<FeatureCombo>,
    pub cells: Vec<CellResult>,
    pub warnings: Vec<String>,
}

impl CVReport {
    pub fn cell(&self, task: Task, combo: FeatureCombo) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.task == task && c.combo == combo)
    }

    pub fn mean(&self, task: Task, combo: FeatureCombo, metric: &str) -> Option<f64> {
        self.cell(task, combo)?.metrics.get(metric).map(|m| m.mean)
    }

    /// Combo with the highest mean for `metric`; lower is better for errors.
    pub fn best_combo(&self, task: Task, metric: &str) -> Option<FeatureCombo> {
        let lower_better = matches!(metric, "rmse" | "mae");
        let mut best: Option<(FeatureCombo, f64)> = None;
        for &combo in &self.combos {
            let Some(v) = self.mean(task, combo, metric) else {
                continue;
            };
            if v.is_nan() {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => {
                    if lower_better {
                        v < b
                    } else {
                        v > b
                    }
                }
            };
            if better {
                best = Some((combo, v));
            }
        }
        best.map(|b| b.0)
    }
}

/// Rows with a target for `task`, their labels and real targets.
pub struct TaskData {
    pub rows: Vec<usize>,
    pub levels: Vec<usize>,
    pub scores: Vec<f64>,
}

pub fn task_data(matrix: &FeatureMatrix, condition: Condition) -> Option<TaskData> {
    let t = matrix.target(condition)?;
    let mut d = TaskData {
        rows: Vec::new(),
        levels: Vec::new(),
        scores: Vec::new(),
    };
    for i in 0..matrix.n_rows() {
        if let (Some(s), Some(l)) = (t.normalized[i], t.severity[i]) {
            d.rows.push(i);
            d.levels.push(l);
            d.scores.push(s);
        }
    }
    Some(d)
}

struct FoldOutcome {
    task: Task,
    combo: FeatureCombo,
    values: BTreeMap<&'static str, f64>,
    warnings: Vec<String>,
}

fn fit(
    task: Task,
    x: &[Vec<f64>],
    data_levels: &[usize],
    data_scores: &[f64],
    params: &Hyperparameters,
    seed: u64,
) -> Result<(TreeEnsembleModel, Vec<String>), ModelError> {
    let kind = task.model_kind(params.classifier);
    match task.kind {
        TaskKind::Regression => train(x, TrainTarget::Regression(data_scores), kind, params, None, seed),
        TaskKind::Classification => {
            let w = sample_weights(data_levels)?;
            train(x, TrainTarget::Classification(data_levels), kind, params, Some(&w), seed)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    matrix: &FeatureMatrix,
    task: Task,
    combo: FeatureCombo,
    data: &TaskData,
    folds: &[usize],
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<FoldOutcome, ModelError> {
    let view = select_combo(matrix, combo);
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (pos, &f) in folds.iter().enumerate() {
        if f == fold {
            va.push(pos);
        } else {
            tr.push(pos);
        }
    }
    let train_ids: HashSet<&str> = tr.iter().map(|&p| matrix.sample_ids[data.rows[p]].as_str()).collect();
    let overlap: Vec<String> = va
        .iter()
        .map(|&p| matrix.sample_ids[data.rows[p]].as_str())
        .filter(|id| train_ids.contains(id))
        .map(str::to_string)
        .collect();
    if !overlap.is_empty() {
        return Err(ModelError::Leakage { fold, ids: overlap });
    }

    let rows = |ps: &[usize]| -> Vec<Vec<f64>> { ps.iter().map(|&p| view.values[data.rows[p]].clone()).collect() };
    let x_tr = rows(&tr);
    let x_va = rows(&va);
    let lv_tr: Vec<usize> = tr.iter().map(|&p| data.levels[p]).collect();
    let sc_tr: Vec<f64> = tr.iter().map(|&p| data.scores[p]).collect();
    let (model, mut warnings) = fit(task, &x_tr, &lv_tr, &sc_tr, &cfg.hyperparameters, cfg.seed)?;
    let tag = format!("{task}/{combo}/fold{fold}");
    warnings.iter_mut().for_each(|w| *w = format!("{tag}: {w}"));

    let mut values = BTreeMap::new();
    match task.kind {
        TaskKind::Regression => {
            let y: Vec<f64> = va.iter().map(|&p| data.scores[p]).collect();
            let pred = model.predict_many(&x_va)?;
            match metrics_regression(&y, &pred) {
                Ok(m) => {
                    values.insert("r2", m.r2);
                    values.insert("rmse", m.rmse);
                    values.insert("mae", m.mae);
                }
                Err(ModelError::UndefinedR2) => warnings.push(format!("{tag}: constant validation target, fold skipped")),
                Err(e) => return Err(e),
            }
        }
        TaskKind::Classification => {
            let y: Vec<usize> = va.iter().map(|&p| data.levels[p]).collect();
            let proba = model.predict_proba_many(&x_va)?;
            let m = metrics_classification(&y, &proba, &model.classes)?;
            match m.auc_macro_ovr {
                Some(a) => {
                    values.insert("auc_macro_ovr", a);
                }
                None => warnings.push(format!("{tag}: single-class fold, AUC skipped")),
            }
            values.insert("balanced_accuracy", m.balanced_accuracy);
            values.insert("macro_f1", m.macro_f1);
        }
    }
    Ok(FoldOutcome {
        task,
        combo,
        values,
        warnings,
    })
}

pub fn run_experiment(matrix: &FeatureMatrix, cfg: &ExperimentConfig) -> Result<CVReport, ModelError> {
    let mut folds_by_condition: BTreeMap<Condition, (TaskData, Vec<usize>)> = BTreeMap::new();
    let mut warnings = Vec::new();
    for task in &cfg.tasks {
        if folds_by_condition.contains_key(&task.condition) {
            continue;
        }
        let data = task_data(matrix, task.condition)
            .filter(|d| !d.rows.is_empty())
            .ok_or_else(|| ModelError::NoTargets { task: task.name() })?;
        let (folds, w) = stratified_kfold(&data.levels, cfg.k, cfg.seed)?;
        warnings.extend(w.into_iter().map(|w| format!("{}: {w}", task.condition)));
        folds_by_condition.insert(task.condition, (data, folds));
    }

    let jobs: Vec<(Task, FeatureCombo, usize)> = cfg
        .tasks
        .iter()
        .flat_map(|&t| cfg.combos.iter().flat_map(move |&c| (0..cfg.k).map(move |f| (t, c, f))))
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(task, combo, fold)| {
            let (data, folds) = &folds_by_condition[&task.condition];
            run_fold(matrix, task, combo, data, folds, fold, cfg)
        })
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for &task in &cfg.tasks {
        for &combo in &cfg.combos {
            let mine: Vec<&FoldOutcome> = outcomes.iter().filter(|o| o.task == task && o.combo == combo).collect();
            let mut metrics = BTreeMap::new();
            for &name in task.metric_names() {
                let vals: Vec<f64> = mine.iter().filter_map(|o| o.values.get(name).copied()).collect();
                let (mean, sd) = mean_sd(&vals);
                metrics.insert(name.to_string(), MetricSummary { mean, sd, folds: vals });
            }
            cells.push(CellResult { task, combo, metrics });
        }
    }
    for o in &outcomes {
        warnings.extend(o.warnings.iter().cloned());
    }

    let folds = folds_by_condition
        .iter()
        .map(|(c, (data, f))| {
            let mut per_sample = vec![None; matrix.n_rows()];
            for (pos, &row) in data.rows.iter().enumerate() {
                per_sample[row] = Some(f[pos]);
            }
            (*c, per_sample)
        })
        .collect();

    Ok(CVReport {
        format_version: REPORT_FORMAT_VERSION,
        seed: cfg.seed,
        k: cfg.k,
        sample_ids: matrix.sample_ids.clone(),
        folds,
        tasks: cfg.tasks.clone(),
        combos: cfg.combos.clone(),
        cells,
        warnings,
    })
}

/// Fits the model for `task` on every row with a target, restricted to `combo`.
pub fn train_task(
    matrix: &FeatureMatrix,
    task: Task,
    combo: FeatureCombo,
    cfg: &ExperimentConfig,
) -> Result<(TreeEnsembleModel, FeatureMatrix, Vec<String>), ModelError> {
    let data = task_data(matrix, task.condition)
        .filter(|d| !d.rows.is_empty())
        .ok_or_else(|| ModelError::NoTargets { task: task.name() })?;
    let view = select_combo(matrix, combo).rows(&data.rows);
    let (mut model, warnings) = fit(task, &view.values, &data.levels, &data.scores, &cfg.hyperparameters, cfg.seed)?;
    model.feature_names = view.columns.iter().map(|c| c.name.clone()).collect();
    Ok((model, view, warnings))
}
