//! Summary table and radar data from a [`CVReport`].

use serde::{Deserialize, Serialize};

use super::cv::{CVReport, Task};

fn cell_text(report: &CVReport, task: Task, combo: crate::featureset::FeatureCombo) -> String {
    match report.cell(task, combo).and_then(|c| c.metrics.get(task.headline_metric())) {
        Some(m) if m.mean.is_finite() => format!("{:.3} ± {:.3}", m.mean, if m.sd.is_finite() { m.sd } else { 0.0 }),
        _ => "n/a".to_string(),
    }
}

/// Markdown table: one row per combination, one column per task's headline
/// metric (R² or macro AUC) as mean ± SD. The best mean per column is bold.
pub fn markdown_table(report: &CVReport) -> String {
    let mut out = String::new();
    out.push_str("| Features |");
    for t in &report.tasks {
        out.push_str(&format!(" {} |", t.column_label()));
    }
    out.push('\n');
    out.push_str("|---|");
    for _ in &report.tasks {
        out.push_str("---|");
    }
    out.push('\n');
    let best: Vec<_> = report
        .tasks
        .iter()
        .map(|t| report.best_combo(*t, t.headline_metric()))
        .collect();
    for &combo in &report.combos {
        out.push_str(&format!("| {} |", combo.label()));
        for (t, b) in report.tasks.iter().zip(&best) {
            let text = cell_text(report, *t, combo);
            if *b == Some(combo) {
                out.push_str(&format!(" **{text}** |"));
            } else {
                out.push_str(&format!(" {text} |"));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarSeries {
    pub combo: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarData {
    pub axes: Vec<String>,
    /// Maximum mean per axis before normalization.
    pub column_max: Vec<f64>,
    pub series: Vec<RadarSeries>,
}

/// Each headline column divided by its maximum over combinations. Columns
/// whose maximum is not positive map to 0.
pub fn radar(report: &CVReport) -> RadarData {
    let raw: Vec<Vec<f64>> = report
        .combos
        .iter()
        .map(|&c| {
            report
                .tasks
                .iter()
                .map(|&t| report.mean(t, c, t.headline_metric()).filter(|v| v.is_finite()).unwrap_or(0.0))
                .collect()
        })
        .collect();
    let column_max: Vec<f64> = (0..report.tasks.len())
        .map(|j| raw.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let series = report
        .combos
        .iter()
        .zip(&raw)
        .map(|(c, r)| RadarSeries {
            combo: c.label(),
            values: r
                .iter()
                .zip(&column_max)
                .map(|(v, m)| if *m > 0.0 { v / m } else { 0.0 })
                .collect(),
        })
        .collect();
    RadarData {
        axes: report.tasks.iter().map(|t| t.column_label()).collect(),
        column_max,
        series,
    }
}
