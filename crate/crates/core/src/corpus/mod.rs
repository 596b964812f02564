//! Writing samples, instrument-score normalization and severity levels.
//!
//! Corpora are exchanged as JSONL, one sample per line. Instrument scores are
//! normalized by the instrument maximum and binned into ordinal severity
//! levels with per-condition cut points.

mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{self, LexiconDictionary};

pub use synth::{filler_words, generate_synthetic, GroundTruth, SynthConfig, SyntheticCorpus};

/// Minimum token count is exclusive: a sample needs more than this many.
pub const MIN_ELIGIBLE_TOKENS: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("normalization domain error: raw {raw} with maximum {max}")]
    Domain { raw: f64, max: f64 },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Invalid {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate sample id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("invalid severity boundaries for {condition}: {message}")]
    Boundaries { condition: Condition, message: String },
    #[error("invalid synthetic config: {0}")]
    SynthConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Depression,
    Anxiety,
    Trauma,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Depression, Condition::Anxiety, Condition::Trauma];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Depression => "depression",
            Condition::Anxiety => "anxiety",
            Condition::Trauma => "trauma",
        }
    }

    /// Number of ordinal severity levels.
    pub fn level_count(self) -> usize {
        match self {
            Condition::Depression | Condition::Anxiety => 4,
            Condition::Trauma => 5,
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentScore {
    pub condition: Condition,
    #[serde(rename = "instrument")]
    pub instrument_id: String,
    pub raw: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WritingSample {
    pub id: String,
    pub text: String,
    pub age: Option<f64>,
    pub gender: Gender,
    pub cohort: String,
    #[serde(rename = "scores")]
    pub instrument_scores: Vec<InstrumentScore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedOutcome {
    pub condition: Condition,
    pub normalized: f64,
    pub severity: usize,
}

pub fn normalize_score(raw: f64, max: f64) -> Result<f64, CorpusError> {
    if !(max > 0.0) || !max.is_finite() || !(0.0..=max).contains(&raw) {
        return Err(CorpusError::Domain { raw, max });
    }
    Ok(raw / max)
}

/// Per-condition severity cut points. A value equal to a boundary belongs to
/// the higher level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityBoundaries {
    pub depression: Vec<f64>,
    pub anxiety: Vec<f64>,
    pub trauma: Vec<f64>,
}

impl Default for SeverityBoundaries {
    fn default() -> Self {
        SeverityBoundaries {
            depression: vec![0.25, 0.50, 0.75],
            anxiety: vec![0.25, 0.50, 0.75],
            trauma: vec![0.20, 0.40, 0.60, 0.80],
        }
    }
}

impl SeverityBoundaries {
    pub fn for_condition(&self, condition: Condition) -> &[f64] {
        match condition {
            Condition::Depression => &self.depression,
            Condition::Anxiety => &self.anxiety,
            Condition::Trauma => &self.trauma,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for c in Condition::ALL {
            let b = self.for_condition(c);
            let fail = |message: String| CorpusError::Boundaries {
                condition: c,
                message,
            };
            if b.len() + 1 != c.level_count() {
                return Err(fail(format!(
                    "expected {} boundaries, got {}",
                    c.level_count() - 1,
                    b.len()
                )));
            }
            if b.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
                return Err(fail("boundaries must lie strictly inside (0, 1)".into()));
            }
            if b.windows(2).any(|w| w[0] >= w[1]) {
                return Err(fail("boundaries must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn bin(&self, normalized: f64, condition: Condition) -> usize {
        bin_with(self.for_condition(condition), normalized)
    }
}

fn bin_with(boundaries: &[f64], normalized: f64) -> usize {
    boundaries.iter().filter(|&&b| normalized >= b).count()
}

/// Severity level under the default equal-width boundaries.
pub fn bin_severity(normalized: f64, condition: Condition) -> usize {
    SeverityBoundaries::default().bin(normalized, condition)
}

impl WritingSample {
    pub fn score(&self, condition: Condition) -> Option<&InstrumentScore> {
        self.instrument_scores
            .iter()
            .find(|s| s.condition == condition)
    }

    pub fn outcome(
        &self,
        condition: Condition,
        boundaries: &SeverityBoundaries,
    ) -> Option<NormalizedOutcome> {
        let s = self.score(condition)?;
        let normalized = normalize_score(s.raw, s.max).ok()?;
        Some(NormalizedOutcome {
            condition,
            normalized,
            severity: boundaries.bin(normalized, condition),
        })
    }

    pub fn outcomes(&self, boundaries: &SeverityBoundaries) -> BTreeMap<Condition, NormalizedOutcome> {
        Condition::ALL
            .iter()
            .filter_map(|&c| self.outcome(c, boundaries).map(|o| (c, o)))
            .collect()
    }

    /// Checks every per-record invariant; errors name the offending field.
    fn validate(&self) -> Result<(), (String, String)> {
        let field = |f: &str, m: String| Err((f.to_string(), m));
        if self.id.is_empty() {
            return field("id", "must not be empty".into());
        }
        if self.text.trim().is_empty() {
            return field("text", "must not be empty".into());
        }
        if let Some(age) = self.age {
            if !(5.0..=100.0).contains(&age) {
                return field("age", format!("{age} outside [5, 100]"));
            }
        }
        let mut seen = HashSet::new();
        for (i, s) in self.instrument_scores.iter().enumerate() {
            if !seen.insert(s.condition) {
                return field(
                    &format!("scores[{i}].condition"),
                    format!("{} scored twice", s.condition),
                );
            }
            if !(s.max > 0.0) || !s.max.is_finite() {
                return field(&format!("scores[{i}].max"), format!("{} must be > 0", s.max));
            }
            if !(0.0..=s.max).contains(&s.raw) {
                return field(
                    &format!("scores[{i}].raw"),
                    format!("{} outside [0, {}]", s.raw, s.max),
                );
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub samples: Vec<WritingSample>,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

/// Parses JSONL corpus text. Blank lines are skipped.
pub fn ingest_str(text: &str) -> Result<Ingested, CorpusError> {
    let mut samples = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut sample: WritingSample =
            serde_json::from_str(raw).map_err(|e| CorpusError::Malformed {
                line,
                message: e.to_string(),
            })?;
        sample.text = lexicon::normalize_text(&sample.text);
        sample
            .validate()
            .map_err(|(field, message)| CorpusError::Invalid {
                line,
                field,
                message,
            })?;
        if !ids.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: sample.id,
            });
        }
        samples.push(sample);
    }
    let mut warnings = Vec::new();
    if samples.is_empty() {
        let msg = "corpus is empty".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Ingested {
        corpus: Corpus { samples },
        warnings,
    })
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Ingested, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ingest_str(&text)
}

pub fn write_jsonl<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for s in &corpus.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn emit(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    write_jsonl(corpus, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Number of segmented tokens in `text`.
pub fn word_count(text: &str, dict: &LexiconDictionary) -> usize {
    lexicon::segment(text, dict).len()
}

pub fn is_eligible(text: &str, dict: &LexiconDictionary) -> bool {
    word_count(text, dict) > MIN_ELIGIBLE_TOKENS
}
