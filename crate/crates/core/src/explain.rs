//! Shapley attributions for tree ensembles.
//!
//! [`tree_shap`] is the path-dependent polynomial-time algorithm: a single
//! recursion carries the set of features on the current root-to-leaf path
//! together with the proportion of "feature absent" paths (from node covers)
//! and "feature present" paths (from `x`), and each leaf distributes its value
//! over that set with Shapley weights. [`brute_force_shapley`] enumerates all
//! feature subsets with the same cover-weighted conditional expectation and is
//! kept as a reference.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featureset::Layer;
use crate::models::{ModelKind, Tree, TreeEnsembleModel};

pub const MAX_BRUTE_FORCE_FEATURES: usize = 15;
pub const DEFAULT_TOP_N: usize = 15;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("input has {actual} features, model expects {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("brute-force Shapley supports at most {MAX_BRUTE_FORCE_FEATURES} features, got {0}")]
    TooManyFeatures(usize),
    #[error("non-finite input at feature {0}")]
    NonFinite(usize),
    #[error("no samples to explain")]
    Empty,
    #[error("sample {sample}: base + sum of attributions misses the model output by {gap:e}")]
    Efficiency { sample: usize, gap: f64 },
}

/// Largest tolerated gap between base + Σφ and the raw model output.
pub const EFFICIENCY_TOLERANCE: f64 = 1e-6;

/// Attributions for one sample, `phi[output][feature]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub base_value: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: Option<usize>) {
    path[depth] = PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else {
            total += path[i].pweight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct Walker<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    /// `phi[feature * outputs + output]`
    phi: &'a mut [f64],
    outputs: usize,
    scale: f64,
}

impl Walker<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &mut self,
        buf: &mut Vec<PathElement>,
        node: usize,
        parent_off: usize,
        mut depth: usize,
        zero: f64,
        one: f64,
        feature: Option<usize>,
    ) {
        let off = parent_off + depth + 1;
        if buf.len() < off + depth + 2 {
            buf.resize(off + depth + 2, PathElement::default());
        }
        buf.copy_within(parent_off..parent_off + depth + 1, off);
        extend_path(&mut buf[off..], depth, zero, one, feature);

        let n = &self.tree.nodes[node];
        let Some(f) = n.feature else {
            let path = &buf[off..];
            for i in 1..=depth {
                let w = unwound_path_sum(path, depth, i);
                let el = path[i];
                let f = el.feature.expect("non-root path element has a feature");
                let scale = w * (el.one_fraction - el.zero_fraction) * self.scale;
                for (o, v) in n.value.iter().enumerate() {
                    self.phi[f * self.outputs + o] += scale * v;
                }
            }
            return;
        };

        let (hot, cold) = if self.x[f] <= n.threshold {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        let hot_zero = self.tree.nodes[hot].cover / n.cover;
        let cold_zero = self.tree.nodes[cold].cover / n.cover;
        let (mut in_zero, mut in_one) = (1.0, 1.0);
        if let Some(k) = (1..=depth).find(|&k| buf[off + k].feature == Some(f)) {
            in_zero = buf[off + k].zero_fraction;
            in_one = buf[off + k].one_fraction;
            unwind_path(&mut buf[off..], depth, k);
            depth -= 1;
        }
        self.recurse(buf, hot, off, depth + 1, hot_zero * in_zero, in_one, Some(f));
        self.recurse(buf, cold, off, depth + 1, cold_zero * in_zero, 0.0, Some(f));
    }
}

/// Cover-weighted mean leaf value of a tree.
pub fn expected_value(tree: &Tree) -> Vec<f64> {
    let root = tree.nodes[0].cover;
    let mut out = vec![0.0; tree.output_len()];
    for n in tree.nodes.iter().filter(|n| n.is_leaf()) {
        for (o, v) in out.iter_mut().zip(&n.value) {
            *o += n.cover / root * v;
        }
    }
    out
}

/// Adds `scale ×` the attributions of one tree into `phi[feature*outputs+o]`.
fn tree_shap_into(tree: &Tree, x: &[f64], phi: &mut [f64], outputs: usize, scale: f64) {
    let mut buf = vec![PathElement::default(); 64];
    let mut w = Walker {
        tree,
        x,
        phi,
        outputs,
        scale,
    };
    // The root call mirrors a virtual parent with no feature.
    w.recurse(&mut buf, 0, 0, 0, 1.0, 1.0, None);
}

/// Path-dependent TreeSHAP for a single tree; outputs follow the leaf width.
pub fn tree_shap_single(tree: &Tree, x: &[f64]) -> ShapAttribution {
    let outputs = tree.output_len();
    let mut flat = vec![0.0; x.len() * outputs];
    tree_shap_into(tree, x, &mut flat, outputs, 1.0);
    ShapAttribution {
        base_value: expected_value(tree),
        phi: (0..outputs)
            .map(|o| (0..x.len()).map(|f| flat[f * outputs + o]).collect())
            .collect(),
    }
}

fn check_input(n_features: usize, x: &[f64]) -> Result<(), ExplainError> {
    if x.len() != n_features {
        return Err(ExplainError::DimensionMismatch {
            expected: n_features,
            actual: x.len(),
        });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(ExplainError::NonFinite(i));
    }
    Ok(())
}

/// Ensemble attributions on the model's raw output scale (mean tree output
/// for extremely randomized trees, per-class margins for boosting).
pub fn tree_shap(model: &TreeEnsembleModel, x: &[f64]) -> Result<ShapAttribution, ExplainError> {
    check_input(model.n_features, x)?;
    let outputs = model.n_outputs();
    let d = x.len();
    let mut base = model.init.clone();
    base.resize(outputs, 0.0);
    let mut flat = vec![0.0; d * outputs];
    let scale = model.tree_scale();
    let mut single = vec![0.0; d];
    for (t, tree) in model.trees.iter().enumerate() {
        match model.tree_output(t) {
            Some(o) => {
                single.iter_mut().for_each(|v| *v = 0.0);
                tree_shap_into(tree, x, &mut single, 1, scale);
                for f in 0..d {
                    flat[f * outputs + o] += single[f];
                }
                base[o] += scale * expected_value(tree)[0];
            }
            None => {
                tree_shap_into(tree, x, &mut flat, outputs, scale);
                for (b, e) in base.iter_mut().zip(expected_value(tree)) {
                    *b += scale * e;
                }
            }
        }
    }
    Ok(ShapAttribution {
        base_value: base,
        phi: (0..outputs)
            .map(|o| (0..d).map(|f| flat[f * outputs + o]).collect())
            .collect(),
    })
}

/// Conditional expectation of the tree given the features in `mask` are known.
fn conditional_expectation(tree: &Tree, node: usize, x: &[f64], mask: u32, out: &mut [f64], weight: f64) {
    let n = &tree.nodes[node];
    match n.feature {
        None => {
            for (o, v) in out.iter_mut().zip(&n.value) {
                *o += weight * v;
            }
        }
        Some(f) if mask >> f & 1 == 1 => {
            let next = if x[f] <= n.threshold { n.left } else { n.right };
            conditional_expectation(tree, next, x, mask, out, weight);
        }
        Some(_) => {
            for child in [n.left, n.right] {
                let w = weight * tree.nodes[child].cover / n.cover;
                conditional_expectation(tree, child, x, mask, out, w);
            }
        }
    }
}

/// Exact Shapley values over all 2^d subsets for one tree.
pub fn brute_force_shapley(tree: &Tree, x: &[f64]) -> Result<ShapAttribution, ExplainError> {
    let d = x.len();
    if d > MAX_BRUTE_FORCE_FEATURES {
        return Err(ExplainError::TooManyFeatures(d));
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(ExplainError::NonFinite(i));
    }
    let outputs = tree.output_len();
    let subsets = 1usize << d;
    let values: Vec<Vec<f64>> = (0..subsets)
        .map(|m| {
            let mut out = vec![0.0; outputs];
            conditional_expectation(tree, 0, x, m as u32, &mut out, 1.0);
            out
        })
        .collect();
    let mut fact = vec![1.0f64; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![vec![0.0; d]; outputs];
    for i in 0..d {
        for m in 0..subsets {
            if m >> i & 1 == 1 {
                continue;
            }
            let s = (m as u32).count_ones() as usize;
            let w = fact[s] * fact[d - s - 1] / fact[d];
            let with = &values[m | 1 << i];
            for o in 0..outputs {
                phi[o][i] += w * (with[o] - values[m][o]);
            }
        }
    }
    Ok(ShapAttribution {
        base_value: values[0].clone(),
        phi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mean_abs_shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapPoint {
    pub value: f64,
    pub shap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: String,
    pub layer_tag: Layer,
    pub mean_abs_shap: f64,
    pub points: Vec<ShapPoint>,
}

/// Mean |φ| per feature sorted non-increasing (ties keep input order), plus
/// per-sample points for the top `top_n`.
pub fn rank_features(
    names: &[String],
    layers: &[Layer],
    values: &[Vec<f64>],
    phi: &[Vec<f64>],
    top_n: usize,
) -> Result<(Vec<RankedFeature>, Vec<FeatureSummary>), ExplainError> {
    if phi.is_empty() {
        return Err(ExplainError::Empty);
    }
    let d = names.len();
    for row in phi.iter().chain(values) {
        if row.len() != d {
            return Err(ExplainError::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
    }
    let n = phi.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| phi.iter().map(|r| r[j].abs()).sum::<f64>() / n).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
    let ranking = order
        .iter()
        .map(|&j| RankedFeature {
            feature: names[j].clone(),
            mean_abs_shap: means[j],
        })
        .collect();
    let summary = order
        .iter()
        .take(top_n)
        .map(|&j| FeatureSummary {
            feature: names[j].clone(),
            layer_tag: layers[j],
            mean_abs_shap: means[j],
            points: values
                .iter()
                .zip(phi)
                .map(|(v, p)| ShapPoint { value: v[j], shap: p[j] })
                .collect(),
        })
        .collect();
    Ok((ranking, summary))
}

/// Which model output the ranking describes.
pub fn explained_output(model: &TreeEnsembleModel) -> (usize, String) {
    match model.kind {
        ModelKind::ExtratreesRegressor => (0, "predicted score".to_string()),
        _ => {
            let o = model.classes.len().saturating_sub(1);
            let level = model.classes.get(o).copied().unwrap_or(0);
            let scale = if model.kind == ModelKind::GbdtClassifier {
                "margin"
            } else {
                "probability"
            };
            (o, format!("severity level {level} {scale}"))
        }
    }
}

/// Attributions for many samples, computed in parallel.
pub fn explain_samples(model: &TreeEnsembleModel, rows: &[Vec<f64>]) -> Result<Vec<ShapAttribution>, ExplainError> {
    rows.par_iter().map(|x| tree_shap(model, x)).collect()
}

/// Checks base + Σφ against the raw output for every sample and output.
pub fn check_efficiency(
    model: &TreeEnsembleModel,
    rows: &[Vec<f64>],
    attributions: &[ShapAttribution],
) -> Result<(), ExplainError> {
    for (i, (x, a)) in rows.iter().zip(attributions).enumerate() {
        let raw = model.predict_raw(x).map_err(|_| ExplainError::DimensionMismatch {
            expected: model.n_features,
            actual: x.len(),
        })?;
        for (o, r) in raw.iter().enumerate() {
            let total = a.base_value[o] + a.phi[o].iter().sum::<f64>();
            let gap = (total - r).abs();
            if !(gap <= EFFICIENCY_TOLERANCE) {
                return Err(ExplainError::Efficiency { sample: i, gap });
            }
        }
    }
    Ok(())
}

/// Serialized explanation of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    pub task: String,
    pub output: String,
    pub n_samples: usize,
    pub base_value: f64,
    pub ranking: Vec<RankedFeature>,
    pub top: Vec<FeatureSummary>,
}

/// Explains `rows` (the model's training view), verifies efficiency and ranks
/// features on the output picked by [`explained_output`].
pub fn summarize(
    model: &TreeEnsembleModel,
    task: &str,
    layers: &[Layer],
    rows: &[Vec<f64>],
    top_n: usize,
) -> Result<ShapSummary, ExplainError> {
    if rows.is_empty() {
        return Err(ExplainError::Empty);
    }
    let attributions = explain_samples(model, rows)?;
    check_efficiency(model, rows, &attributions)?;
    let (o, output) = explained_output(model);
    let phi: Vec<Vec<f64>> = attributions.iter().map(|a| a.phi[o].clone()).collect();
    let (ranking, top) = rank_features(&model.feature_names, layers, rows, &phi, top_n)?;
    Ok(ShapSummary {
        task: task.to_string(),
        output,
        n_samples: rows.len(),
        base_value: attributions[0].base_value[o],
        ranking,
        top,
    })
}
