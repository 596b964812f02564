//! Multiclass gradient boosting with histogram split search.
//!
//! Each round fits one depth-limited regression tree per class to the
//! softmax residuals `y_k - p_k` by weighted least squares. Leaves take a
//! single Newton step `(K-1)/K · Σwr / Σw·p(1-p)` and are stored already
//! multiplied by the learning rate, so the raw class score is the initial
//! log-prior plus the sum of that class's trees.

use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree, TreeBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_bins: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_rounds: 200,
            learning_rate: 0.1,
            max_depth: 3,
            max_bins: 256,
            min_samples_leaf: 1,
        }
    }
}

/// Candidate thresholds for one feature: midpoints between consecutive
/// distinct values, thinned to rank quantiles when there are too many.
pub fn bin_thresholds(values: &[f64], max_bins: usize) -> Vec<f64> {
    let mut u: Vec<f64> = values.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mid = |a: f64, b: f64| {
        let m = a + (b - a) / 2.0;
        if m < b {
            m
        } else {
            a
        }
    };
    if u.len() <= max_bins.max(2) {
        return u.windows(2).map(|w| mid(w[0], w[1])).collect();
    }
    let mut out: Vec<f64> = (1..max_bins)
        .map(|q| {
            let i = q * u.len() / max_bins;
            mid(u[i - 1], u[i])
        })
        .collect();
    out.dedup();
    out
}

/// Bin index of `x`: the number of thresholds strictly below it, so
/// `bin <= b` exactly when `x <= thresholds[b]`.
pub fn bin_of(thresholds: &[f64], x: f64) -> usize {
    thresholds.partition_point(|t| *t < x)
}

pub struct Binned {
    pub thresholds: Vec<Vec<f64>>,
    /// Column-major bin indices.
    pub bins: Vec<Vec<u16>>,
}

pub fn bin_matrix(cols: &[Vec<f64>], max_bins: usize) -> Binned {
    let max_bins = max_bins.clamp(2, u16::MAX as usize);
    let thresholds: Vec<Vec<f64>> = cols.iter().map(|c| bin_thresholds(c, max_bins)).collect();
    let bins = cols
        .iter()
        .zip(&thresholds)
        .map(|(c, t)| c.iter().map(|&x| bin_of(t, x) as u16).collect())
        .collect();
    Binned { thresholds, bins }
}

struct Grower<'a> {
    binned: &'a Binned,
    residual: &'a [f64],
    prob: &'a [f64],
    weights: &'a [f64],
    params: &'a GbdtParams,
    scale: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in idx {
            num += self.weights[i] * self.residual[i];
            den += self.weights[i] * self.prob[i] * (1.0 - self.prob[i]);
        }
        if den.abs() < 1e-150 {
            0.0
        } else {
            self.scale * num / den * self.params.learning_rate
        }
    }

    fn grow(&self, b: &mut TreeBuilder, idx: &mut [usize], depth: usize) -> usize {
        let cover: f64 = idx.iter().map(|&i| self.weights[i]).sum();
        let me = b.push(Node::leaf(vec![self.leaf_value(idx)], cover));
        let min_leaf = self.params.min_samples_leaf.max(1);
        if depth >= self.params.max_depth || idx.len() < 2 * min_leaf {
            return me;
        }

        let g_total: f64 = idx.iter().map(|&i| self.weights[i] * self.residual[i]).sum();
        let parent = g_total * g_total / cover;
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, col) in self.binned.bins.iter().enumerate() {
            let nb = self.binned.thresholds[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut g = vec![0.0; nb];
            let mut w = vec![0.0; nb];
            let mut c = vec![0usize; nb];
            for &i in idx.iter() {
                let bin = col[i] as usize;
                g[bin] += self.weights[i] * self.residual[i];
                w[bin] += self.weights[i];
                c[bin] += 1;
            }
            let (mut gl, mut wl, mut cl) = (0.0, 0.0, 0usize);
            for bin in 0..nb - 1 {
                gl += g[bin];
                wl += w[bin];
                cl += c[bin];
                let cr = idx.len() - cl;
                if cl < min_leaf || cr < min_leaf {
                    continue;
                }
                let wr = cover - wl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let gr = g_total - gl;
                let gain = gl * gl / wl + gr * gr / wr - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, bin));
                }
            }
        }

        let Some((_, f, bin)) = best else {
            return me;
        };
        let col = &self.binned.bins[f];
        let mut split = 0;
        for j in 0..idx.len() {
            if (col[idx[j]] as usize) <= bin {
                idx.swap(j, split);
                split += 1;
            }
        }
        let (l_idx, r_idx) = idx.split_at_mut(split);
        let left = self.grow(b, l_idx, depth + 1);
        let right = self.grow(b, r_idx, depth + 1);
        let node = &mut b.nodes[me];
        node.feature = Some(f);
        node.threshold = self.binned.thresholds[f][bin];
        node.left = left;
        node.right = right;
        me
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Returns the per-class initial scores and the trees, ordered round-major
/// (tree `t` belongs to class `t % k`).
pub fn fit(
    cols: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    weights: &[f64],
    params: &GbdtParams,
) -> (Vec<f64>, Vec<Tree>) {
    let n = labels.len();
    let total: f64 = weights.iter().sum();
    let mut prior = vec![0.0; k];
    for (&y, &w) in labels.iter().zip(weights) {
        prior[y] += w;
    }
    let init: Vec<f64> = prior.iter().map(|p| (p / total).max(1e-300).ln()).collect();
    if k < 2 {
        return (vec![0.0; k], Vec::new());
    }

    let binned = bin_matrix(cols, params.max_bins);
    let mut scores: Vec<Vec<f64>> = vec![init.clone(); n];
    let mut trees = Vec::with_capacity(params.n_rounds * k);
    let scale = (k as f64 - 1.0) / k as f64;
    let mut residual = vec![0.0; n];
    let mut prob_k = vec![0.0; n];
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..params.n_rounds {
        let probs: Vec<Vec<f64>> = scores.iter().map(|s| softmax(s)).collect();
        let mut round = Vec::with_capacity(k);
        for class in 0..k {
            for i in 0..n {
                let y = if labels[i] == class { 1.0 } else { 0.0 };
                prob_k[i] = probs[i][class];
                residual[i] = y - prob_k[i];
            }
            let grower = Grower {
                binned: &binned,
                residual: &residual,
                prob: &prob_k,
                weights,
                params,
                scale,
            };
            for (j, v) in idx.iter_mut().enumerate() {
                *v = j;
            }
            let mut b = TreeBuilder::new();
            grower.grow(&mut b, &mut idx, 0);
            round.push(b.finish());
        }
        for (class, tree) in round.iter().enumerate() {
            for (i, s) in scores.iter_mut().enumerate() {
                let row_leaf = leaf_by_bins(tree, &binned, i);
                s[class] += tree.nodes[row_leaf].value[0];
            }
        }
        trees.extend(round);
    }
    (init, trees)
}

fn leaf_by_bins(tree: &Tree, binned: &Binned, i: usize) -> usize {
    let mut j = 0;
    loop {
        let n = &tree.nodes[j];
        match n.feature {
            None => return j,
            Some(f) => {
                let bin = binned.bins[f][i] as usize;
                let split_bin = bin_of(&binned.thresholds[f], n.threshold);
                j = if bin <= split_bin { n.left } else { n.right };
            }
        }
    }
}
