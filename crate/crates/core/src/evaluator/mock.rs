//! Deterministic offline stand-in for the chat model.
//!
//! [`MockChat`] answers the three protocol prompts with live-shaped JSON, so
//! offline runs exercise the same validation and provenance path as remote
//! ones. Scores follow a fixed rule table driven by a planted severity `p` in
//! [0, 1], with small jitter seeded from the text hash:
//!
//! | field                                  | rule                |
//! |----------------------------------------|---------------------|
//! | cognitive_bias_score                   | 5p ± 0.25           |
//! | other pathology dimensions             | 0.5 + 4p ± 0.45     |
//! | structural and positive dimensions     | 4.5 − 4p ± 0.45     |
//! | Labov evaluation, resolution           | 5 − 4p ± 0.45       |
//! | other Labov components                 | 5 − 1.5p ± 0.45     |
//! | narrative time, detail                 | 5 − 4p ± 0.45       |
//! | narrative location                     | 4.5 − 3p ± 0.45     |
//! | transition quality                     | 4.5 − 3p + o ± 0.45 |
//!
//! `o` is one offset in ±0.75 shared by all transitions of a text, so the
//! mean quality stays noisy however many transitions there are. All values
//! are rounded and clamped to their scales. Proposition categories
//! shift toward cognition and emotion as `p` grows.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::{
    evaluate, prompts::PromptSet, ChatClient, ChatMessage, ClinicalDimension, EvaluationResult,
    EvaluatorError, LabovComponent, PropositionCategory, RstRelation,
};
use crate::coherence::split_sentences;
use crate::providers::sha256_hex;

pub const MOCK_MODEL_ID: &str = "mock-evaluator-v1";

const PATHOLOGY: [ClinicalDimension; 3] = [
    ClinicalDimension::Avoidance,
    ClinicalDimension::Overgeneralization,
    ClinicalDimension::SelfReportedDistressScore,
];

fn rng_for(text: &str, salt: &str) -> ChaCha8Rng {
    let digest = sha256_hex(format!("{salt}\u{0}{text}").as_bytes());
    let seed = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
    ChaCha8Rng::seed_from_u64(seed)
}

fn grade(rng: &mut ChaCha8Rng, centre: f64, jitter: f64, min: u8, max: u8) -> u8 {
    let j = rng.gen_range(-jitter..=jitter);
    (centre + j).round().clamp(min as f64, max as f64) as u8
}

fn sentences(text: &str) -> Vec<String> {
    match split_sentences(text) {
        Ok(s) if !s.is_empty() => s,
        _ => vec![if text.trim().is_empty() {
            "（空）".to_string()
        } else {
            text.trim().to_string()
        }],
    }
}

fn quote(sentences: &[String], i: usize) -> String {
    sentences[i % sentences.len()].chars().take(24).collect()
}

fn evidence(score: u8, sentences: &[String], i: usize) -> String {
    if score > 1 {
        quote(sentences, i)
    } else {
        String::new()
    }
}

pub fn propositional_reply(text: &str, p: f64) -> Value {
    let p = p.clamp(0.0, 1.0);
    let mut rng = rng_for(text, "propositional");
    let sents = sentences(text);
    let n = rng.gen_range(8..=16);
    let weights = [
        (PropositionCategory::ActionsFacts, 0.45 - 0.3 * p),
        (PropositionCategory::SensoryPerception, 0.2 - 0.1 * p),
        (PropositionCategory::DirectEmotion, 0.1 + 0.15 * p),
        (PropositionCategory::IndirectEmotion, 0.05 + 0.1 * p),
        (PropositionCategory::Cognition, 0.2 + 0.15 * p),
    ];
    let total: f64 = weights.iter().map(|w| w.1).sum();
    let propositions: Vec<Value> = (0..n)
        .map(|i| {
            let mut draw = rng.gen_range(0.0..total);
            let mut category = PropositionCategory::Cognition;
            for (c, w) in weights {
                if draw < w {
                    category = c;
                    break;
                }
                draw -= w;
            }
            json!({"text": quote(&sents, i), "category": category.name()})
        })
        .collect();
    let text_offset = rng.gen_range(-0.75..=0.75);
    let relations: Vec<Value> = (0..sents.len().saturating_sub(1).min(40))
        .map(|i| {
            let relation = RstRelation::ALL[rng.gen_range(0..RstRelation::ALL.len())];
            json!({
                "pair_index": i,
                "relation": relation.name(),
                "quality": grade(&mut rng, 4.5 - 3.0 * p + text_offset, 0.45, 0, 5),
            })
        })
        .collect();
    json!({
        "propositions": propositions,
        "narrative_time_score": grade(&mut rng, 5.0 - 4.0 * p, 0.45, 0, 5),
        "narrative_location_score": grade(&mut rng, 4.5 - 3.0 * p, 0.45, 0, 5),
        "narrative_detail_score": grade(&mut rng, 5.0 - 4.0 * p, 0.45, 0, 5),
        "rst": {"relations": relations},
    })
}

pub fn labov_reply(text: &str, p: f64) -> Value {
    let p = p.clamp(0.0, 1.0);
    let mut rng = rng_for(text, "labov");
    let sents = sentences(text);
    let mut out = Map::new();
    for (i, c) in LabovComponent::ALL.iter().enumerate() {
        let centre = match c {
            LabovComponent::Evaluation | LabovComponent::Resolution => 5.0 - 4.0 * p,
            _ => 5.0 - 1.5 * p,
        };
        let score = grade(&mut rng, centre, 0.45, 1, 5);
        out.insert(
            c.name().to_string(),
            json!({"score": score, "evidence": evidence(score, &sents, i)}),
        );
    }
    Value::Object(out)
}

pub fn clinical_reply(text: &str, p: f64) -> Value {
    let p = p.clamp(0.0, 1.0);
    let mut rng = rng_for(text, "clinical");
    let sents = sentences(text);
    let dims: Vec<Value> = ClinicalDimension::ALL
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let score = if *d == ClinicalDimension::CognitiveBiasScore {
                grade(&mut rng, 5.0 * p, 0.25, 0, 5)
            } else if PATHOLOGY.contains(d) {
                grade(&mut rng, 0.5 + 4.0 * p, 0.45, 0, 5)
            } else {
                grade(&mut rng, 4.5 - 4.0 * p, 0.45, 0, 5)
            };
            json!({"name": d.name(), "score": score, "evidence": evidence(score, &sents, i)})
        })
        .collect();
    json!({ "dimensions": dims })
}

/// Extracts the narrative from a rendered user prompt (`<<<` ... `>>>`).
fn narrative_of(user: &str) -> &str {
    let start = user.find("<<<").map(|i| i + 3).unwrap_or(0);
    let end = user.rfind(">>>").filter(|e| *e >= start).unwrap_or(user.len());
    user[start..end].trim()
}

/// Offline chat client keyed by narrative text.
#[derive(Debug, Clone, Default)]
pub struct MockChat {
    planted: HashMap<String, f64>,
    default_severity: f64,
}

impl MockChat {
    pub fn new(default_severity: f64) -> Self {
        MockChat {
            planted: HashMap::new(),
            default_severity,
        }
    }

    pub fn plant(&mut self, text: &str, severity: f64) {
        self.planted.insert(text.trim().to_string(), severity);
    }

    fn severity(&self, text: &str) -> f64 {
        self.planted.get(text).copied().unwrap_or(self.default_severity)
    }
}

impl ChatClient for MockChat {
    fn model_id(&self) -> &str {
        MOCK_MODEL_ID
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluatorError> {
        let system = messages
            .iter()
            .find(|m| m.role == "system")
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let user = messages
            .iter()
            .find(|m| m.role == "user")
            .ok_or_else(|| EvaluatorError::Response("no user message".into()))?;
        let text = narrative_of(&user.content);
        let p = self.severity(text);
        let reply = if system.contains("\"dimensions\"") {
            clinical_reply(text, p)
        } else if system.contains("\"propositions\"") {
            propositional_reply(text, p)
        } else {
            labov_reply(text, p)
        };
        Ok(reply.to_string())
    }
}

/// Full three-protocol evaluation of `text` at planted severity `p`.
pub fn mock_evaluate(id: &str, text: &str, planted_severity: f64) -> EvaluationResult {
    let mut chat = MockChat::new(planted_severity);
    chat.plant(text, planted_severity);
    evaluate(&chat, &PromptSet::builtin(), id, text).expect("mock replies always validate")
}
