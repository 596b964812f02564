//! Regression and classification metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub r2: f64,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// `None` when the fold holds a single class.
    pub auc_macro_ovr: Option<f64>,
    pub balanced_accuracy: f64,
    pub macro_f1: f64,
}

fn check_len(a: usize, b: usize) -> Result<(), ModelError> {
    if a != b {
        return Err(ModelError::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    if a == 0 {
        return Err(ModelError::Empty("metric input"));
    }
    Ok(())
}

/// R² against the mean of `y`, RMSE and MAE.
pub fn metrics_regression(y: &[f64], pred: &[f64]) -> Result<RegressionMetrics, ModelError> {
    check_len(y.len(), pred.len())?;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(ModelError::UndefinedR2);
    }
    let sse: f64 = y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum();
    let mae = y.iter().zip(pred).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    Ok(RegressionMetrics {
        r2: 1.0 - sse / sst,
        rmse: (sse / n).sqrt(),
        mae,
    })
}

/// Binary ROC AUC via the rank-sum statistic with ties counted one half.
/// `None` unless both classes occur.
pub fn binary_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            if positive[o] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `proba[i][j]` is the probability of `classes[j]` for sample `i`.
pub fn metrics_classification(
    y: &[usize],
    proba: &[Vec<f64>],
    classes: &[usize],
) -> Result<ClassificationMetrics, ModelError> {
    check_len(y.len(), proba.len())?;
    for row in proba {
        if row.len() != classes.len() {
            return Err(ModelError::DimensionMismatch {
                expected: classes.len(),
                actual: row.len(),
            });
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(ModelError::InvalidProbabilities(s));
        }
    }
    let present: BTreeSet<usize> = y.iter().copied().collect();

    let mut aucs = Vec::new();
    if present.len() >= 2 {
        for &c in &present {
            let positive: Vec<bool> = y.iter().map(|v| *v == c).collect();
            let scores: Vec<f64> = match classes.iter().position(|k| *k == c) {
                Some(j) => proba.iter().map(|r| r[j]).collect(),
                None => vec![0.0; y.len()],
            };
            aucs.extend(binary_auc(&positive, &scores));
        }
    }
    let auc_macro_ovr = if aucs.is_empty() {
        None
    } else {
        Some(aucs.iter().sum::<f64>() / aucs.len() as f64)
    };

    let pred: Vec<usize> = proba.iter().map(|r| classes[argmax(r)]).collect();
    let recall = |c: usize| {
        let tp = y.iter().zip(&pred).filter(|(t, p)| **t == c && **p == c).count();
        let support = y.iter().filter(|t| **t == c).count();
        tp as f64 / support as f64
    };
    let balanced_accuracy = present.iter().map(|&c| recall(c)).sum::<f64>() / present.len() as f64;

    let labels: BTreeSet<usize> = present.iter().chain(pred.iter()).copied().collect();
    let f1 = |c: usize| {
        let tp = y.iter().zip(&pred).filter(|(t, p)| **t == c && **p == c).count() as f64;
        let fp = y.iter().zip(&pred).filter(|(t, p)| **t != c && **p == c).count() as f64;
        let fn_ = y.iter().zip(&pred).filter(|(t, p)| **t == c && **p != c).count() as f64;
        if tp == 0.0 {
            0.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    };
    let macro_f1 = labels.iter().map(|&c| f1(c)).sum::<f64>() / labels.len() as f64;

    Ok(ClassificationMetrics {
        auc_macro_ovr,
        balanced_accuracy,
        macro_f1,
    })
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_regression() {
        let y = [1.0, 2.0, 4.0];
        let m = metrics_regression(&y, &y).unwrap();
        assert_eq!((m.r2, m.rmse, m.mae), (1.0, 0.0, 0.0));
        let mean = [7.0 / 3.0; 3];
        assert!(metrics_regression(&y, &mean).unwrap().r2.abs() < 1e-15);
        assert!(matches!(
            metrics_regression(&[2.0, 2.0], &[1.0, 2.0]),
            Err(ModelError::UndefinedR2)
        ));
    }

    #[test]
    fn auc_fixture() {
        let auc = binary_auc(&[false, false, true, true], &[0.1, 0.4, 0.35, 0.8]).unwrap();
        assert_eq!(auc, 0.75);
        assert_eq!(binary_auc(&[true, false], &[0.5, 0.5]), Some(0.5));
        assert_eq!(binary_auc(&[true, true], &[0.1, 0.2]), None);
    }

    #[test]
    fn single_class_fold_has_no_auc() {
        let m = metrics_classification(&[1, 1], &[vec![0.2, 0.8], vec![0.6, 0.4]], &[0, 1]).unwrap();
        assert_eq!(m.auc_macro_ovr, None);
        assert_eq!(m.balanced_accuracy, 0.5);
    }

    #[test]
    fn f1_counts_predicted_only_classes() {
        // class 2 is predicted but never true, so it contributes F1 = 0.
        let proba = vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let m = metrics_classification(&[0, 1], &proba, &[0, 1, 2]).unwrap();
        assert_eq!(m.macro_f1, 1.0 / 3.0);
        assert_eq!(m.balanced_accuracy, 0.5);
    }

    #[test]
    fn sd_uses_sample_denominator() {
        let (m, s) = mean_sd(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
