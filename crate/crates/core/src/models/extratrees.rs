//! Extremely randomized trees.
//!
//! At each node a random subset of non-constant features is visited; each
//! gets one threshold drawn uniformly between its node minimum and maximum,
//! and the candidate with the largest weighted impurity decrease wins
//! (variance for regression, Gini for classification).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree, TreeBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    /// Features visited per split; `None` means √d for classification and d
    /// for regression.
    pub max_features: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        ExtraTreesParams {
            n_trees: 300,
            max_features: None,
            min_samples_leaf: 2,
            min_samples_split: 2,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Response<'a> {
    Regression(&'a [f64]),
    /// Labels encoded `0..k`.
    Classification { labels: &'a [usize], k: usize },
}

impl Response<'_> {
    fn width(&self) -> usize {
        match self {
            Response::Regression(_) => 1,
            Response::Classification { k, .. } => *k,
        }
    }
}

struct Ctx<'a> {
    cols: &'a [Vec<f64>],
    response: Response<'a>,
    weights: &'a [f64],
    max_features: usize,
    params: &'a ExtraTreesParams,
}

/// Weighted node statistics: regression keeps (Σw, Σwy, Σwy²), classification
/// keeps per-class weight sums.
#[derive(Clone)]
struct Stats {
    w: f64,
    acc: Vec<f64>,
}

impl Stats {
    fn new(width: usize, regression: bool) -> Self {
        Stats {
            w: 0.0,
            acc: vec![0.0; if regression { 2 } else { width }],
        }
    }

    fn add(&mut self, response: &Response, i: usize, w: f64) {
        self.w += w;
        match response {
            Response::Regression(y) => {
                self.acc[0] += w * y[i];
                self.acc[1] += w * y[i] * y[i];
            }
            Response::Classification { labels, .. } => self.acc[labels[i]] += w,
        }
    }

    fn impurity(&self, regression: bool) -> f64 {
        if self.w <= 0.0 {
            return 0.0;
        }
        if regression {
            let m = self.acc[0] / self.w;
            (self.acc[1] / self.w - m * m).max(0.0)
        } else {
            1.0 - self.acc.iter().map(|c| (c / self.w).powi(2)).sum::<f64>()
        }
    }

    fn value(&self, regression: bool) -> Vec<f64> {
        if regression {
            vec![self.acc[0] / self.w]
        } else {
            self.acc.iter().map(|c| c / self.w).collect()
        }
    }
}

fn node_stats(ctx: &Ctx, idx: &[usize]) -> Stats {
    let regression = matches!(ctx.response, Response::Regression(_));
    let mut s = Stats::new(ctx.response.width(), regression);
    for &i in idx {
        s.add(&ctx.response, i, ctx.weights[i]);
    }
    s
}

fn grow(ctx: &Ctx, rng: &mut ChaCha8Rng, b: &mut TreeBuilder, idx: &mut [usize], depth: usize) -> usize {
    let regression = matches!(ctx.response, Response::Regression(_));
    let stats = node_stats(ctx, idx);
    let impurity = stats.impurity(regression);
    let me = b.push(Node::leaf(stats.value(regression), stats.w));

    let p = ctx.params;
    let n = idx.len();
    if n < p.min_samples_split
        || n < 2 * p.min_samples_leaf
        || impurity <= 1e-12
        || p.max_depth.is_some_and(|d| depth >= d)
    {
        return me;
    }

    let mut features: Vec<usize> = (0..ctx.cols.len()).collect();
    features.shuffle(rng);
    let mut visited = 0;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in features {
        if visited >= ctx.max_features {
            break;
        }
        let col = &ctx.cols[f];
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.min(col[i]);
            hi = hi.max(col[i]);
        }
        if !(hi > lo) {
            continue;
        }
        visited += 1;
        let threshold = rng.gen_range(lo..hi);
        let mut left = Stats::new(ctx.response.width(), regression);
        let mut n_left = 0;
        for &i in idx.iter() {
            if col[i] <= threshold {
                left.add(&ctx.response, i, ctx.weights[i]);
                n_left += 1;
            }
        }
        let n_right = n - n_left;
        if n_left < p.min_samples_leaf || n_right < p.min_samples_leaf {
            continue;
        }
        let mut right = stats.clone();
        right.w -= left.w;
        for (r, l) in right.acc.iter_mut().zip(&left.acc) {
            *r -= l;
        }
        let gain = stats.w * impurity - left.w * left.impurity(regression) - right.w * right.impurity(regression);
        if best.is_none_or(|(g, _, _)| gain > g) {
            best = Some((gain, f, threshold));
        }
    }

    let Some((_, f, threshold)) = best else {
        return me;
    };
    let col = &ctx.cols[f];
    let mut split = 0;
    for j in 0..idx.len() {
        if col[idx[j]] <= threshold {
            idx.swap(j, split);
            split += 1;
        }
    }
    let (l_idx, r_idx) = idx.split_at_mut(split);
    let left = grow(ctx, rng, b, l_idx, depth + 1);
    let right = grow(ctx, rng, b, r_idx, depth + 1);
    let node = &mut b.nodes[me];
    node.feature = Some(f);
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    me
}

/// Fits `params.n_trees` trees in parallel; tree `t` uses seed `seed ^ t`.
pub fn fit(
    cols: &[Vec<f64>],
    response: Response,
    weights: &[f64],
    params: &ExtraTreesParams,
    seed: u64,
) -> Vec<Tree> {
    let d = cols.len();
    let max_features = params
        .max_features
        .unwrap_or(match response {
            Response::Regression(_) => d,
            Response::Classification { .. } => (d as f64).sqrt() as usize,
        })
        .clamp(1, d.max(1));
    let n = weights.len();
    let ctx = Ctx {
        cols,
        response,
        weights,
        max_features,
        params,
    };
    (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ t as u64);
            let mut idx: Vec<usize> = (0..n).collect();
            let mut b = TreeBuilder::new();
            grow(&ctx, &mut rng, &mut b, &mut idx, 0);
            b.finish()
        })
        .collect()
}
