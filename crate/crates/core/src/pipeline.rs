//! Per-corpus extraction of the three feature layers.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::coherence::{analyze, CoherenceError, Embedder};
use crate::corpus::{Corpus, GroundTruth};
use crate::evaluator::{self, flatten_l3, ChatClient, EvaluationResult, EvaluatorError, MockChat, PromptSet};
use crate::featureset::{L2Input, L3Input};
use crate::lexicon::{profile, LexicalProfile, LexiconDictionary, LexiconError};

pub fn extract_l1(
    corpus: &Corpus,
    dict: &LexiconDictionary,
) -> Result<BTreeMap<String, LexicalProfile>, (String, LexiconError)> {
    corpus
        .samples
        .par_iter()
        .map(|s| profile(&s.text, dict).map(|p| (s.id.clone(), p)).map_err(|e| (s.id.clone(), e)))
        .collect()
}

/// Coherence profiles. Provider failures become missing rows with a warning;
/// any other error aborts.
pub fn extract_l2(
    corpus: &Corpus,
    embedder: &dyn Embedder,
) -> Result<(BTreeMap<String, L2Input>, Vec<String>), (String, CoherenceError)> {
    let results: Vec<(String, Result<_, CoherenceError>)> = corpus
        .samples
        .par_iter()
        .map(|s| (s.id.clone(), analyze(&s.text, embedder)))
        .collect();
    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for (id, r) in results {
        match r {
            Ok(p) => {
                out.insert(id, Some(p));
            }
            Err(CoherenceError::Provider(e)) => {
                warnings.push(format!("{id}: embedding failed, L2 zero-filled: {e}"));
                out.insert(id, None);
            }
            Err(e) => return Err((id, e)),
        }
    }
    Ok((out, warnings))
}

/// Runs the three protocols on every sample. A provider failure marks the
/// sample all-missing when `tolerate_provider_errors` is set, otherwise aborts.
pub fn evaluate_corpus(
    corpus: &Corpus,
    chat: &dyn ChatClient,
    templates: &PromptSet,
    tolerate_provider_errors: bool,
) -> Result<Vec<EvaluationResult>, (String, EvaluatorError)> {
    corpus
        .samples
        .par_iter()
        .map(|s| match evaluator::evaluate(chat, templates, &s.id, &s.text) {
            Ok(r) => Ok(r),
            Err(EvaluatorError::Provider(e)) if tolerate_provider_errors => {
                log::warn!("{}: chat provider failed: {e}", s.id);
                Ok(evaluator::all_missing(&s.id, &e.to_string()))
            }
            Err(e) => Err((s.id.clone(), e)),
        })
        .collect()
}

/// Mock chat client planted with each sample's generator severity. Samples
/// without ground truth get `default_severity`.
pub fn mock_chat(corpus: &Corpus, truth: &[GroundTruth], default_severity: f64) -> MockChat {
    let by_id: BTreeMap<&str, f64> = truth.iter().map(|t| (t.id.as_str(), t.planted_severity)).collect();
    let mut chat = MockChat::new(default_severity);
    for s in &corpus.samples {
        if let Some(p) = by_id.get(s.id.as_str()) {
            chat.plant(&s.text, *p);
        }
    }
    chat
}

pub fn l3_inputs(results: &[EvaluationResult]) -> BTreeMap<String, L3Input> {
    results
        .iter()
        .map(|r| (r.id.clone(), flatten_l3(r).ok()))
        .collect()
}
