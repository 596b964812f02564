//! Strict validation of protocol responses.
//!
//! Responses are parsed from untyped JSON field by field so that each failure
//! maps to one [`SchemaError`] class naming the offending path. Unknown extra
//! fields are ignored; model-supplied ratios or aggregate scores are never
//! read.

use std::collections::HashSet;
use std::str::FromStr;

use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    ClinicalDimension, ClinicalDimensions, Grounding, LabovComponent, LabovScores,
    PropositionUnit, PropositionalResult, RstAssessment, RstRelation,
    RstTransition, Scored,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("response is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("missing field `{path}`")]
    MissingField { path: String },
    #[error("field `{path}` must be {expected}")]
    WrongType { path: String, expected: &'static str },
    #[error("field `{path}` = {value} is outside [{min}, {max}]")]
    OutOfRange {
        path: String,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("field `{path}` must hold {expected} entries, found {actual}")]
    Cardinality {
        path: String,
        expected: String,
        actual: usize,
    },
    #[error("field `{path}` has unknown value `{value}`")]
    UnknownValue { path: String, value: String },
    #[error("field `{path}` repeats `{value}`")]
    Duplicate { path: String, value: String },
    #[error("field `{path}` needs evidence for a score above 1")]
    MissingEvidence { path: String },
}

impl SchemaError {
    /// Short class name, stable for tests and logs.
    pub fn class(&self) -> &'static str {
        match self {
            SchemaError::InvalidJson(_) => "invalid_json",
            SchemaError::MissingField { .. } => "missing_field",
            SchemaError::WrongType { .. } => "wrong_type",
            SchemaError::OutOfRange { .. } => "out_of_range",
            SchemaError::Cardinality { .. } => "cardinality",
            SchemaError::UnknownValue { .. } => "unknown_value",
            SchemaError::Duplicate { .. } => "duplicate",
            SchemaError::MissingEvidence { .. } => "missing_evidence",
        }
    }
}

type Result<T> = std::result::Result<T, SchemaError>;

fn parse_root(raw: &str) -> Result<Map<String, Value>> {
    let value: Value = serde_json::from_str(raw.trim())
        .map_err(|e| SchemaError::InvalidJson(e.to_string()))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err(SchemaError::WrongType {
            path: "$".into(),
            expected: "an object",
        }),
    }
}

fn field<'a>(obj: &'a Map<String, Value>, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| SchemaError::MissingField {
        path: join(path, key),
    })
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn as_object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| SchemaError::WrongType {
        path: path.to_string(),
        expected: "an object",
    })
}

fn as_array<'a>(v: &'a Value, path: &str) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| SchemaError::WrongType {
        path: path.to_string(),
        expected: "an array",
    })
}

fn as_str<'a>(v: &'a Value, path: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| SchemaError::WrongType {
        path: path.to_string(),
        expected: "a string",
    })
}

/// Integers only; `4.0` is accepted as 4, `4.5` is not.
fn as_int(v: &Value, path: &str) -> Result<i64> {
    if let Some(i) = v.as_i64() {
        return Ok(i);
    }
    match v.as_f64() {
        Some(f) if f.fract() == 0.0 && f.abs() < 1e15 => Ok(f as i64),
        _ => Err(SchemaError::WrongType {
            path: path.to_string(),
            expected: "an integer",
        }),
    }
}

fn int_in(v: &Value, path: &str, min: i64, max: i64) -> Result<u8> {
    let i = as_int(v, path)?;
    if i < min || i > max {
        return Err(SchemaError::OutOfRange {
            path: path.to_string(),
            value: i,
            min,
            max,
        });
    }
    Ok(i as u8)
}

fn enum_value<T: FromStr>(v: &Value, path: &str) -> Result<T> {
    let s = as_str(v, path)?;
    s.parse().map_err(|_| SchemaError::UnknownValue {
        path: path.to_string(),
        value: s.to_string(),
    })
}

/// `{"score": int, "evidence": str}`; evidence must be non-blank when the
/// score exceeds 1.
fn scored(v: &Value, path: &str, min: i64, max: i64) -> Result<Scored> {
    let obj = as_object(v, path)?;
    let score = int_in(field(obj, path, "score")?, &join(path, "score"), min, max)?;
    let evidence = match obj.get("evidence") {
        None | Some(Value::Null) => String::new(),
        Some(e) => as_str(e, &join(path, "evidence"))?.to_string(),
    };
    if score > 1 && evidence.trim().is_empty() {
        return Err(SchemaError::MissingEvidence {
            path: join(path, "evidence"),
        });
    }
    Ok(Scored { score, evidence })
}

pub fn parse_propositional(raw: &str) -> Result<PropositionalResult> {
    let root = parse_root(raw)?;
    let items = as_array(field(&root, "", "propositions")?, "propositions")?;
    if items.is_empty() {
        return Err(SchemaError::Cardinality {
            path: "propositions".into(),
            expected: "at least 1".into(),
            actual: 0,
        });
    }
    let mut propositions = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let path = format!("propositions[{i}]");
        let obj = as_object(item, &path)?;
        let text = as_str(field(obj, &path, "text")?, &join(&path, "text"))?;
        if text.trim().is_empty() {
            return Err(SchemaError::WrongType {
                path: join(&path, "text"),
                expected: "a non-empty string",
            });
        }
        let category = enum_value(field(obj, &path, "category")?, &join(&path, "category"))?;
        propositions.push(PropositionUnit {
            text_span: text.to_string(),
            category,
        });
    }

    let grade = |key: &str| -> Result<u8> { int_in(field(&root, "", key)?, key, 0, 5) };
    let grounding = Grounding {
        narrative_time_score: grade("narrative_time_score")?,
        narrative_location_score: grade("narrative_location_score")?,
        narrative_detail_score: grade("narrative_detail_score")?,
    };

    let rst_obj = as_object(field(&root, "", "rst")?, "rst")?;
    let rels = as_array(field(rst_obj, "rst", "relations")?, "rst.relations")?;
    let mut relations = Vec::with_capacity(rels.len());
    for (i, r) in rels.iter().enumerate() {
        let path = format!("rst.relations[{i}]");
        let obj = as_object(r, &path)?;
        let pair_index = as_int(field(obj, &path, "pair_index")?, &join(&path, "pair_index"))?;
        if pair_index < 0 {
            return Err(SchemaError::OutOfRange {
                path: join(&path, "pair_index"),
                value: pair_index,
                min: 0,
                max: i64::MAX,
            });
        }
        let relation: RstRelation = enum_value(field(obj, &path, "relation")?, &join(&path, "relation"))?;
        let quality = int_in(field(obj, &path, "quality")?, &join(&path, "quality"), 0, 5)?;
        relations.push(RstTransition {
            pair_index: pair_index as usize,
            relation,
            quality,
        });
    }

    Ok(PropositionalResult::new(propositions, grounding, RstAssessment::new(relations)))
}

pub fn parse_labov(raw: &str) -> Result<LabovScores> {
    let root = parse_root(raw)?;
    let mut scores = Vec::with_capacity(6);
    for c in LabovComponent::ALL {
        let key = c.name();
        scores.push(scored(field(&root, "", key)?, key, 1, 5)?);
    }
    Ok(LabovScores {
        scores: scores.try_into().expect("six components"),
    })
}

pub fn parse_clinical(raw: &str) -> Result<ClinicalDimensions> {
    let root = parse_root(raw)?;
    let items = as_array(field(&root, "", "dimensions")?, "dimensions")?;
    if items.len() != ClinicalDimension::ALL.len() {
        return Err(SchemaError::Cardinality {
            path: "dimensions".into(),
            expected: ClinicalDimension::ALL.len().to_string(),
            actual: items.len(),
        });
    }
    let mut slots: Vec<Option<Scored>> = vec![None; ClinicalDimension::ALL.len()];
    let mut seen = HashSet::new();
    for (i, item) in items.iter().enumerate() {
        let path = format!("dimensions[{i}]");
        let obj = as_object(item, &path)?;
        let dim: ClinicalDimension = enum_value(field(obj, &path, "name")?, &join(&path, "name"))?;
        if !seen.insert(dim) {
            return Err(SchemaError::Duplicate {
                path: join(&path, "name"),
                value: dim.name().to_string(),
            });
        }
        slots[dim.index()] = Some(scored(item, &path, 0, 5)?);
    }
    let scores: Vec<Scored> = slots
        .into_iter()
        .map(|s| s.expect("15 distinct known names fill every slot"))
        .collect();
    Ok(ClinicalDimensions {
        scores: scores.try_into().expect("fifteen dimensions"),
    })
}
