//! Layer-tagged feature matrix.
//!
//! Columns are grouped by layer: demographics (`B`), lexical frequencies
//! (`L1`), coherence statistics plus a missingness flag (`L2`) and narrative
//! evaluation scores plus a missingness flag (`L3`). Rows follow corpus order.
//! The matrix is persisted as CSV with a JSON sidecar describing columns and
//! targets.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coherence::CoherenceProfile;
use crate::corpus::{Condition, Corpus, Gender, SeverityBoundaries};
use crate::evaluator::{l3_columns, L3Features, L3_WIDTH};
use crate::lexicon::{Category, LexicalProfile};

pub const L2_FLAG: &str = "l2_missing_flag";
pub const L3_FLAG: &str = "l3_missing_flag";
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("{layer} has features for id `{id}` which is not in the corpus")]
    UnknownId { layer: Layer, id: String },
    #[error("no {layer} features for sample `{id}`")]
    MissingRow { layer: Layer, id: String },
    #[error("non-finite value in column `{column}` for sample `{id}`")]
    NonFinite { column: String, id: String },
    #[error("unknown feature combination `{0}`")]
    UnknownCombo(String),
    #[error("matrix file: {0}")]
    Format(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    B,
    L1,
    L2,
    L3,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::B, Layer::L1, Layer::L2, Layer::L3];

    pub fn name(self) -> &'static str {
        match self {
            Layer::B => "B",
            Layer::L1 => "L1",
            Layer::L2 => "L2",
            Layer::L3 => "L3",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureCombo {
    #[serde(rename = "B")]
    B,
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L2")]
    L2,
    #[serde(rename = "L3")]
    L3,
    #[serde(rename = "B_L1")]
    BL1,
    #[serde(rename = "B_L1_L2")]
    BL1L2,
    #[serde(rename = "B_L1_L2_L3")]
    BL1L2L3,
}

impl FeatureCombo {
    /// Single layers first, then the cumulative combinations.
    pub const ALL: [FeatureCombo; 7] = [
        FeatureCombo::B,
        FeatureCombo::L1,
        FeatureCombo::L2,
        FeatureCombo::L3,
        FeatureCombo::BL1,
        FeatureCombo::BL1L2,
        FeatureCombo::BL1L2L3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureCombo::B => "B",
            FeatureCombo::L1 => "L1",
            FeatureCombo::L2 => "L2",
            FeatureCombo::L3 => "L3",
            FeatureCombo::BL1 => "B_L1",
            FeatureCombo::BL1L2 => "B_L1_L2",
            FeatureCombo::BL1L2L3 => "B_L1_L2_L3",
        }
    }

    /// Display label in the `B+L1+L2` style.
    pub fn label(self) -> String {
        self.name().replace('_', "+")
    }

    pub fn layers(self) -> &'static [Layer] {
        match self {
            FeatureCombo::B => &[Layer::B],
            FeatureCombo::L1 => &[Layer::L1],
            FeatureCombo::L2 => &[Layer::L2],
            FeatureCombo::L3 => &[Layer::L3],
            FeatureCombo::BL1 => &[Layer::B, Layer::L1],
            FeatureCombo::BL1L2 => &[Layer::B, Layer::L1, Layer::L2],
            FeatureCombo::BL1L2L3 => &Layer::ALL,
        }
    }
}

impl FromStr for FeatureCombo {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, FeatureError> {
        let norm = s.trim().replace('+', "_");
        FeatureCombo::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(&norm))
            .ok_or_else(|| FeatureError::UnknownCombo(s.to_string()))
    }
}

impl fmt::Display for FeatureCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub layer: Layer,
}

/// Per-condition outcome columns; `None` where a sample lacks that score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub condition: Condition,
    pub normalized: Vec<Option<f64>>,
    pub severity: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub sample_ids: Vec<String>,
    pub columns: Vec<Column>,
    /// Row-major, one row per sample.
    pub values: Vec<Vec<f64>>,
    pub targets: Vec<Target>,
}

/// Coherence input for one sample; `None` when the embedding provider failed.
pub type L2Input = Option<CoherenceProfile>;

/// L3 input for one sample; `None` when every protocol failed.
pub type L3Input = Option<L3Features>;

pub fn gender_code(g: Gender) -> f64 {
    match g {
        Gender::Female => 1.0,
        Gender::Male => 0.0,
        Gender::Unspecified => 0.5,
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn check_ids<T>(layer: Layer, map: &BTreeMap<String, T>, ids: &HashSet<&str>) -> Result<(), FeatureError> {
    match map.keys().find(|k| !ids.contains(k.as_str())) {
        Some(id) => Err(FeatureError::UnknownId {
            layer,
            id: id.clone(),
        }),
        None => Ok(()),
    }
}

pub fn all_columns() -> Vec<Column> {
    let mut cols = vec![
        Column { name: "age".into(), layer: Layer::B },
        Column { name: "gender_code".into(), layer: Layer::B },
    ];
    cols.extend(Category::ALL.iter().map(|c| Column {
        name: c.name().to_string(),
        layer: Layer::L1,
    }));
    cols.extend(CoherenceProfile::COLUMNS.iter().map(|c| Column {
        name: c.to_string(),
        layer: Layer::L2,
    }));
    cols.push(Column { name: L2_FLAG.into(), layer: Layer::L2 });
    cols.extend(l3_columns().into_iter().map(|name| Column { name, layer: Layer::L3 }));
    cols.push(Column { name: L3_FLAG.into(), layer: Layer::L3 });
    cols
}

/// Builds the full matrix in corpus order. Missing L2/L3 rows are zero with
/// the flag set; every sample needs an L1 profile.
pub fn assemble(
    corpus: &Corpus,
    boundaries: &SeverityBoundaries,
    l1: &BTreeMap<String, LexicalProfile>,
    l2: &BTreeMap<String, L2Input>,
    l3: &BTreeMap<String, L3Input>,
) -> Result<FeatureMatrix, FeatureError> {
    let ids: HashSet<&str> = corpus.samples.iter().map(|s| s.id.as_str()).collect();
    check_ids(Layer::L1, l1, &ids)?;
    check_ids(Layer::L2, l2, &ids)?;
    check_ids(Layer::L3, l3, &ids)?;

    let mut ages: Vec<f64> = corpus.samples.iter().filter_map(|s| s.age).collect();
    let age_fill = median(&mut ages).unwrap_or(0.0);
    let columns = all_columns();

    let mut values = Vec::with_capacity(corpus.samples.len());
    for s in &corpus.samples {
        let mut row = Vec::with_capacity(columns.len());
        row.push(s.age.unwrap_or(age_fill));
        row.push(gender_code(s.gender));
        let lex = l1.get(&s.id).ok_or_else(|| FeatureError::MissingRow {
            layer: Layer::L1,
            id: s.id.clone(),
        })?;
        row.extend_from_slice(&lex.frequencies);
        match l2.get(&s.id).and_then(|p| p.as_ref()) {
            Some(p) => {
                row.extend_from_slice(&p.values());
                row.push(if p.degenerate { 1.0 } else { 0.0 });
            }
            None => {
                row.extend_from_slice(&[0.0; 7]);
                row.push(1.0);
            }
        }
        match l3.get(&s.id).and_then(|p| p.as_ref()) {
            Some(f) => {
                row.extend_from_slice(&f.values);
                row.push(if f.missing { 1.0 } else { 0.0 });
            }
            None => {
                row.extend_from_slice(&[0.0; L3_WIDTH]);
                row.push(1.0);
            }
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                column: columns[i].name.clone(),
                id: s.id.clone(),
            });
        }
        values.push(row);
    }

    let targets = Condition::ALL
        .iter()
        .map(|&c| {
            let outcomes: Vec<_> = corpus.samples.iter().map(|s| s.outcome(c, boundaries)).collect();
            Target {
                condition: c,
                normalized: outcomes.iter().map(|o| o.map(|o| o.normalized)).collect(),
                severity: outcomes.iter().map(|o| o.map(|o| o.severity)).collect(),
            }
        })
        .collect();

    Ok(FeatureMatrix {
        sample_ids: corpus.samples.iter().map(|s| s.id.clone()).collect(),
        columns,
        values,
        targets,
    })
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    pub fn target(&self, condition: Condition) -> Option<&Target> {
        self.targets.iter().find(|t| t.condition == condition)
    }

    /// Mean of a layer's missingness flag, or `None` if the flag column is absent.
    pub fn missing_fraction(&self, layer: Layer) -> Option<f64> {
        let flag = match layer {
            Layer::L2 => L2_FLAG,
            Layer::L3 => L3_FLAG,
            _ => return None,
        };
        let j = self.column_index(flag)?;
        if self.values.is_empty() {
            return Some(0.0);
        }
        Some(self.values.iter().map(|r| r[j]).sum::<f64>() / self.n_rows() as f64)
    }

    /// Drops both missingness flag columns.
    pub fn without_flags(&self) -> FeatureMatrix {
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&j| self.columns[j].name != L2_FLAG && self.columns[j].name != L3_FLAG)
            .collect();
        self.project(&keep)
    }

    fn project(&self, keep: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            sample_ids: self.sample_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values: self
                .values
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
            targets: self.targets.clone(),
        }
    }

    /// Rows in `rows` order.
    pub fn rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            columns: self.columns.clone(),
            values: rows.iter().map(|&i| self.values[i].clone()).collect(),
            targets: self
                .targets
                .iter()
                .map(|t| Target {
                    condition: t.condition,
                    normalized: rows.iter().map(|&i| t.normalized[i]).collect(),
                    severity: rows.iter().map(|&i| t.severity[i]).collect(),
                })
                .collect(),
        }
    }
}

/// Zeroes every cell of a layer in rows whose flag for that layer is set.
pub fn apply_zero_fill(matrix: &FeatureMatrix) -> FeatureMatrix {
    let mut out = matrix.clone();
    for (layer, flag) in [(Layer::L2, L2_FLAG), (Layer::L3, L3_FLAG)] {
        let Some(f) = matrix.column_index(flag) else {
            continue;
        };
        let cells: Vec<usize> = (0..matrix.n_cols())
            .filter(|&j| j != f && matrix.columns[j].layer == layer)
            .collect();
        for row in out.values.iter_mut() {
            if row[f] != 0.0 {
                for &j in &cells {
                    row[j] = 0.0;
                }
            }
        }
    }
    out
}

pub fn select_combo(matrix: &FeatureMatrix, combo: FeatureCombo) -> FeatureMatrix {
    let layers = combo.layers();
    let keep: Vec<usize> = (0..matrix.n_cols())
        .filter(|&j| layers.contains(&matrix.columns[j].layer))
        .collect();
    matrix.project(&keep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSchema {
    pub version: u32,
    pub n_rows: usize,
    pub columns: Vec<Column>,
    pub targets: Vec<String>,
}

fn target_headers(c: Condition) -> [String; 2] {
    [format!("target_{}_score", c.name()), format!("target_{}_level", c.name())]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(e: csv::Error) -> FeatureError {
    FeatureError::Format(e.to_string())
}

/// Writes `csv_path` and its JSON schema sidecar. Floats use the shortest
/// representation that round-trips, so identical matrices give identical bytes.
pub fn save(matrix: &FeatureMatrix, csv_path: &Path, schema_path: &Path) -> Result<(), FeatureError> {
    let file = File::create(csv_path).map_err(io_err(csv_path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["id".to_string()];
    header.extend(matrix.columns.iter().map(|c| c.name.clone()));
    for t in &matrix.targets {
        header.extend(target_headers(t.condition));
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, row) in matrix.values.iter().enumerate() {
        let mut rec = vec![matrix.sample_ids[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        for t in &matrix.targets {
            rec.push(t.normalized[i].map(|v| v.to_string()).unwrap_or_default());
            rec.push(t.severity[i].map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(csv_path))?;

    let schema = MatrixSchema {
        version: SCHEMA_VERSION,
        n_rows: matrix.n_rows(),
        columns: matrix.columns.clone(),
        targets: matrix.targets.iter().flat_map(|t| target_headers(t.condition)).collect(),
    };
    let mut out = BufWriter::new(File::create(schema_path).map_err(io_err(schema_path))?);
    serde_json::to_writer_pretty(&mut out, &schema).map_err(|e| FeatureError::Format(e.to_string()))?;
    out.write_all(b"\n").map_err(io_err(schema_path))?;
    out.flush().map_err(io_err(schema_path))
}

pub fn load(csv_path: &Path, schema_path: &Path) -> Result<FeatureMatrix, FeatureError> {
    let schema: MatrixSchema = serde_json::from_reader(BufReader::new(
        File::open(schema_path).map_err(io_err(schema_path))?,
    ))
    .map_err(|e| FeatureError::Format(format!("{}: {e}", schema_path.display())))?;
    if schema.version != SCHEMA_VERSION {
        return Err(FeatureError::Format(format!("unsupported schema version {}", schema.version)));
    }
    let conditions: Vec<Condition> = Condition::ALL
        .into_iter()
        .filter(|c| schema.targets.contains(&target_headers(*c)[0]))
        .collect();
    let mut r = csv::Reader::from_path(csv_path).map_err(csv_err)?;
    let width = 1 + schema.columns.len() + 2 * conditions.len();
    let mut m = FeatureMatrix {
        sample_ids: Vec::new(),
        columns: schema.columns.clone(),
        values: Vec::new(),
        targets: conditions
            .iter()
            .map(|&c| Target {
                condition: c,
                normalized: Vec::new(),
                severity: Vec::new(),
            })
            .collect(),
    };
    let num = |s: &str, line: usize| -> Result<f64, FeatureError> {
        s.parse()
            .map_err(|_| FeatureError::Format(format!("row {line}: `{s}` is not a number")))
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != width {
            return Err(FeatureError::Format(format!(
                "row {}: expected {width} fields, found {}",
                line + 1,
                rec.len()
            )));
        }
        m.sample_ids.push(rec[0].to_string());
        let row = (1..=schema.columns.len())
            .map(|j| num(&rec[j], line + 1))
            .collect::<Result<Vec<_>, _>>()?;
        m.values.push(row);
        for (k, t) in m.targets.iter_mut().enumerate() {
            let base = 1 + schema.columns.len() + 2 * k;
            let score = &rec[base];
            let level = &rec[base + 1];
            t.normalized
                .push(if score.is_empty() { None } else { Some(num(score, line + 1)?) });
            t.severity.push(if level.is_empty() {
                None
            } else {
                Some(level.parse().map_err(|_| {
                    FeatureError::Format(format!("row {}: bad level `{level}`", line + 1))
                })?)
            });
        }
    }
    if m.n_rows() != schema.n_rows {
        return Err(FeatureError::Format(format!(
            "schema declares {} rows, csv has {}",
            schema.n_rows,
            m.n_rows()
        )));
    }
    Ok(m)
}
