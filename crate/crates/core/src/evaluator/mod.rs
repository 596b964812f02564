//! Narrative evaluation by a chat model under three fixed protocols.
//!
//! * propositional: minimal semantic units with a five-way category, three
//!   grounding grades and rhetorical transition qualities;
//! * Labov: six structural components rated 1..5 with evidence;
//! * clinical: fifteen trauma-focused dimensions rated 0..5 with evidence.
//!
//! Every response passes through [`schema`] validation. A failed response gets
//! exactly one repair prompt quoting the validation error; a second failure
//! marks the protocol missing for that sample. [`flatten_l3`] turns a result
//! into the 28 model features plus a missingness flag.

pub mod mock;
pub mod prompts;
pub mod schema;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::providers::{sha256_hex, ProviderClient, ProviderError};

pub use mock::{mock_evaluate, MockChat, MOCK_MODEL_ID};
pub use prompts::{PromptSet, PromptTemplate, RenderedPrompt};
pub use schema::SchemaError;

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("provider: {0}")]
    Provider(#[from] ProviderError),
    #[error("malformed chat response: {0}")]
    Response(String),
    #[error("prompt template {name}: {reason}")]
    Template { name: String, reason: String },
    #[error("all three protocols missing for sample {0}")]
    AllMissing(String),
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(self) -> usize {
                Self::ALL.iter().position(|v| *v == self).expect("listed variant")
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(PropositionCategory {
    ActionsFacts => "actions_facts",
    SensoryPerception => "sensory_perception",
    DirectEmotion => "direct_emotion",
    IndirectEmotion => "indirect_emotion",
    Cognition => "cognition",
});

named_enum!(RstRelation {
    Elaboration => "elaboration",
    Cause => "cause",
    Contrast => "contrast",
    Sequence => "sequence",
    Condition => "condition",
    Concession => "concession",
    Background => "background",
    EvaluationRel => "evaluation_rel",
    Restatement => "restatement",
    Other => "other",
});

named_enum!(LabovComponent {
    Abstract => "abstract",
    Orientation => "orientation",
    ComplicatingAction => "complicating_action",
    Evaluation => "evaluation",
    Resolution => "resolution",
    Coda => "coda",
});

named_enum!(
    /// Ordered by group: structural trauma processing, cognitive processing,
    /// affective and agentic integration, global structural coherence.
    ClinicalDimension {
        ExposureEngagement => "exposure_engagement",
        Avoidance => "avoidance",
        Overgeneralization => "overgeneralization",
        EpisodicSpecificity => "episodic_specificity",
        CognitiveBiasScore => "cognitive_bias_score",
        SenseMakingDepth => "sense_making_depth",
        CausalCoherence => "causal_coherence",
        PerspectiveFlexibility => "perspective_flexibility",
        AgencyScore => "agency_score",
        AffectiveTone => "affective_tone",
        EmotionalGranularity => "emotional_granularity",
        SelfReportedDistressScore => "self_reported_distress_score",
        TemporalConsistency => "temporal_consistency",
        SpatialConsistency => "spatial_consistency",
        ContextualDensity => "contextual_density",
    }
);

named_enum!(Protocol {
    Propositional => "propositional",
    Labov => "labov",
    Clinical => "clinical",
});

impl ClinicalDimension {
    pub const GROUPS: [(&'static str, usize); 4] = [
        ("structural_trauma_processing", 4),
        ("cognitive_processing", 4),
        ("affective_agentic_integration", 4),
        ("global_structural_coherence", 3),
    ];

    pub fn group(self) -> &'static str {
        let mut end = 0;
        for (name, size) in Self::GROUPS {
            end += size;
            if self.index() < end {
                return name;
            }
        }
        unreachable!("groups cover all fifteen dimensions")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionUnit {
    pub text_span: String,
    pub category: PropositionCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    /// Share of cognition units.
    pub cognitive: f64,
    /// Share of direct and indirect emotion units.
    pub affective: f64,
    /// Share of action/fact and sensory units.
    pub grounding: f64,
}

impl Ratios {
    pub fn from_units(units: &[PropositionUnit]) -> Ratios {
        if units.is_empty() {
            return Ratios {
                cognitive: 0.0,
                affective: 0.0,
                grounding: 0.0,
            };
        }
        let (mut c, mut a, mut g) = (0usize, 0usize, 0usize);
        for u in units {
            match u.category {
                PropositionCategory::Cognition => c += 1,
                PropositionCategory::DirectEmotion | PropositionCategory::IndirectEmotion => a += 1,
                PropositionCategory::ActionsFacts | PropositionCategory::SensoryPerception => g += 1,
            }
        }
        let n = units.len() as f64;
        Ratios {
            cognitive: c as f64 / n,
            affective: a as f64 / n,
            grounding: g as f64 / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grounding {
    pub narrative_time_score: u8,
    pub narrative_location_score: u8,
    pub narrative_detail_score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstTransition {
    pub pair_index: usize,
    pub relation: RstRelation,
    pub quality: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RstAssessment {
    pub relations: Vec<RstTransition>,
    /// Mean transition quality; 0 when no transitions were returned.
    pub global_coherence: f64,
}

impl RstAssessment {
    pub fn new(relations: Vec<RstTransition>) -> Self {
        let global_coherence = if relations.is_empty() {
            0.0
        } else {
            relations.iter().map(|r| r.quality as f64).sum::<f64>() / relations.len() as f64
        };
        RstAssessment {
            relations,
            global_coherence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionalResult {
    pub propositions: Vec<PropositionUnit>,
    pub ratios: Ratios,
    pub grounding: Grounding,
    pub rst: RstAssessment,
}

impl PropositionalResult {
    pub fn new(propositions: Vec<PropositionUnit>, grounding: Grounding, rst: RstAssessment) -> Self {
        let ratios = Ratios::from_units(&propositions);
        PropositionalResult {
            propositions,
            ratios,
            grounding,
            rst,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scored {
    pub score: u8,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabovScores {
    /// Indexed by [`LabovComponent::index`].
    pub scores: [Scored; 6],
}

impl LabovScores {
    pub fn get(&self, c: LabovComponent) -> &Scored {
        &self.scores[c.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalDimensions {
    /// Indexed by [`ClinicalDimension::index`].
    pub scores: [Scored; 15],
}

impl ClinicalDimensions {
    pub fn get(&self, d: ClinicalDimension) -> &Scored {
        &self.scores[d.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub protocol: Protocol,
    pub model_id: String,
    pub prompt_hash: String,
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolFailure {
    pub protocol: Protocol,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub id: String,
    pub propositional: Option<PropositionalResult>,
    pub labov: Option<LabovScores>,
    pub clinical: Option<ClinicalDimensions>,
    pub provenance: Vec<Provenance>,
    pub failures: Vec<ProtocolFailure>,
}

impl EvaluationResult {
    pub fn is_missing(&self, p: Protocol) -> bool {
        match p {
            Protocol::Propositional => self.propositional.is_none(),
            Protocol::Labov => self.labov.is_none(),
            Protocol::Clinical => self.clinical.is_none(),
        }
    }

    pub fn any_missing(&self) -> bool {
        Protocol::ALL.iter().any(|p| self.is_missing(*p))
    }

    pub fn all_missing(&self) -> bool {
        Protocol::ALL.iter().all(|p| self.is_missing(*p))
    }
}

/// The 28 layer-3 columns in matrix order.
pub fn l3_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "C_ratio",
        "A_ratio",
        "G_ratio",
        "narrative_time_score",
        "narrative_location_score",
        "narrative_detail_score",
        "rst_global_coherence",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(LabovComponent::ALL.iter().map(|c| format!("labov_{}", c.name())));
    cols.extend(ClinicalDimension::ALL.iter().map(|d| d.name().to_string()));
    cols
}

pub const L3_WIDTH: usize = 28;

#[derive(Debug, Clone, PartialEq)]
pub struct L3Features {
    pub values: [f64; L3_WIDTH],
    /// Set when at least one protocol is missing; its columns are zero.
    pub missing: bool,
}

pub fn flatten_l3(result: &EvaluationResult) -> Result<L3Features, EvaluatorError> {
    if Protocol::ALL.iter().all(|p| result.is_missing(*p)) {
        return Err(EvaluatorError::AllMissing(result.id.clone()));
    }
    let mut values = [0.0; L3_WIDTH];
    if let Some(p) = &result.propositional {
        values[0] = p.ratios.cognitive;
        values[1] = p.ratios.affective;
        values[2] = p.ratios.grounding;
        values[3] = p.grounding.narrative_time_score as f64;
        values[4] = p.grounding.narrative_location_score as f64;
        values[5] = p.grounding.narrative_detail_score as f64;
        values[6] = p.rst.global_coherence;
    }
    if let Some(l) = &result.labov {
        for (i, s) in l.scores.iter().enumerate() {
            values[7 + i] = s.score as f64;
        }
    }
    if let Some(c) = &result.clinical {
        for (i, s) in c.scores.iter().enumerate() {
            values[13 + i] = s.score as f64;
        }
    }
    Ok(L3Features {
        values,
        missing: result.any_missing(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        ChatMessage {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// One chat completion at temperature 0 returning the assistant content.
pub trait ChatClient: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluatorError>;
}

/// OpenAI-compatible chat endpoint behind the cached [`ProviderClient`].
pub struct RemoteChat {
    client: Arc<ProviderClient>,
}

impl RemoteChat {
    pub fn new(client: Arc<ProviderClient>) -> Self {
        RemoteChat { client }
    }

    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.client.config().model_id,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": messages,
        })
    }

    pub fn parse_response(response: &Value) -> Result<String, EvaluatorError> {
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| EvaluatorError::Response("no choices[0].message.content".into()))
    }
}

impl ChatClient for RemoteChat {
    fn model_id(&self) -> &str {
        &self.client.config().model_id
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluatorError> {
        let body = self.request_body(messages);
        let response = self.client.call("chat/completions", &body)?;
        Self::parse_response(&response)
    }
}

/// Outcome of one protocol after at most one repair.
#[derive(Debug, Clone)]
pub enum ProtocolOutcome<T> {
    Accepted { value: T, provenance: Provenance },
    Missing { error: String, provenance: Provenance },
}

/// Runs one protocol: prompt, validate, and on failure one repair round.
/// Provider errors propagate; schema errors end in `Missing`.
pub fn run_protocol<T>(
    chat: &dyn ChatClient,
    protocol: Protocol,
    templates: &prompts::PromptSet,
    text: &str,
    parse: impl Fn(&str) -> Result<T, SchemaError>,
) -> Result<ProtocolOutcome<T>, EvaluatorError> {
    let rendered = templates.for_protocol(protocol).render(text);
    let mut provenance = Provenance {
        protocol,
        model_id: chat.model_id().to_string(),
        prompt_hash: rendered.hash(),
        repaired: false,
    };
    let mut messages = rendered.messages();
    let first = chat.complete(&messages)?;
    let err = match parse(&first) {
        Ok(value) => return Ok(ProtocolOutcome::Accepted { value, provenance }),
        Err(e) => e,
    };
    log::debug!("{protocol} response rejected: {err}");
    messages.push(ChatMessage::new("assistant", first));
    messages.push(ChatMessage::new("user", templates.repair.render_repair(&err.to_string())));
    provenance.repaired = true;
    let second = chat.complete(&messages)?;
    Ok(match parse(&second) {
        Ok(value) => ProtocolOutcome::Accepted { value, provenance },
        Err(e) => ProtocolOutcome::Missing {
            error: e.to_string(),
            provenance,
        },
    })
}

pub fn evaluate_propositional(
    chat: &dyn ChatClient,
    templates: &prompts::PromptSet,
    text: &str,
) -> Result<ProtocolOutcome<PropositionalResult>, EvaluatorError> {
    run_protocol(chat, Protocol::Propositional, templates, text, schema::parse_propositional)
}

pub fn evaluate_labov(
    chat: &dyn ChatClient,
    templates: &prompts::PromptSet,
    text: &str,
) -> Result<ProtocolOutcome<LabovScores>, EvaluatorError> {
    run_protocol(chat, Protocol::Labov, templates, text, schema::parse_labov)
}

pub fn evaluate_clinical(
    chat: &dyn ChatClient,
    templates: &prompts::PromptSet,
    text: &str,
) -> Result<ProtocolOutcome<ClinicalDimensions>, EvaluatorError> {
    run_protocol(chat, Protocol::Clinical, templates, text, schema::parse_clinical)
}

fn absorb<T>(
    outcome: ProtocolOutcome<T>,
    slot: &mut Option<T>,
    result: &mut EvaluationResult,
) {
    match outcome {
        ProtocolOutcome::Accepted { value, provenance } => {
            *slot = Some(value);
            result.provenance.push(provenance);
        }
        ProtocolOutcome::Missing { error, provenance } => {
            result.failures.push(ProtocolFailure {
                protocol: provenance.protocol,
                error,
            });
            result.provenance.push(provenance);
        }
    }
}

/// Runs all three protocols for one sample.
pub fn evaluate(
    chat: &dyn ChatClient,
    templates: &prompts::PromptSet,
    id: &str,
    text: &str,
) -> Result<EvaluationResult, EvaluatorError> {
    let mut result = EvaluationResult {
        id: id.to_string(),
        propositional: None,
        labov: None,
        clinical: None,
        provenance: Vec::with_capacity(3),
        failures: Vec::new(),
    };
    let mut slot = None;
    absorb(evaluate_propositional(chat, templates, text)?, &mut slot, &mut result);
    result.propositional = slot;
    let mut slot = None;
    absorb(evaluate_labov(chat, templates, text)?, &mut slot, &mut result);
    result.labov = slot;
    let mut slot = None;
    absorb(evaluate_clinical(chat, templates, text)?, &mut slot, &mut result);
    result.clinical = slot;
    Ok(result)
}

/// Marks a sample whose provider calls failed outright.
pub fn all_missing(id: &str, error: &str) -> EvaluationResult {
    EvaluationResult {
        id: id.to_string(),
        propositional: None,
        labov: None,
        clinical: None,
        provenance: Vec::new(),
        failures: Protocol::ALL
            .iter()
            .map(|p| ProtocolFailure {
                protocol: *p,
                error: error.to_string(),
            })
            .collect(),
    }
}

/// Hash of a rendered prompt, used as provenance.
pub fn prompt_hash(system: &str, user: &str) -> String {
    sha256_hex(format!("{system}\u{0}{user}").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn unit(c: PropositionCategory) -> PropositionUnit {
        PropositionUnit {
            text_span: "x".into(),
            category: c,
        }
    }

    #[test]
    fn ratios_count_categories() {
        let mut units = vec![unit(PropositionCategory::Cognition); 2];
        units.extend(vec![unit(PropositionCategory::ActionsFacts); 5]);
        units.extend(vec![unit(PropositionCategory::IndirectEmotion); 3]);
        let r = Ratios::from_units(&units);
        assert_eq!(r.cognitive, 0.2);
        assert_eq!(r.affective, 0.3);
        assert_eq!(r.grounding, 0.5);
    }

    #[test]
    fn clinical_groups_are_4_4_4_3() {
        let mut counts = std::collections::BTreeMap::new();
        for d in ClinicalDimension::ALL {
            *counts.entry(d.group()).or_insert(0) += 1;
        }
        assert_eq!(counts["structural_trauma_processing"], 4);
        assert_eq!(counts["cognitive_processing"], 4);
        assert_eq!(counts["affective_agentic_integration"], 4);
        assert_eq!(counts["global_structural_coherence"], 3);
        assert_eq!(l3_columns().len(), L3_WIDTH);
    }

    #[test]
    fn names_round_trip() {
        for r in RstRelation::ALL {
            assert_eq!(r.name().parse::<RstRelation>().unwrap(), *r);
            assert_eq!(serde_json::to_value(r).unwrap(), json!(r.name()));
        }
    }

    struct Scripted {
        replies: Mutex<Vec<String>>,
        seen: Mutex<Vec<Vec<ChatMessage>>>,
    }

    impl Scripted {
        fn new(replies: Vec<String>) -> Self {
            Scripted {
                replies: Mutex::new(replies.into_iter().rev().collect()),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl ChatClient for Scripted {
        fn model_id(&self) -> &str {
            "scripted"
        }
        fn complete(&self, messages: &[ChatMessage]) -> Result<String, EvaluatorError> {
            self.seen.lock().unwrap().push(messages.to_vec());
            Ok(self.replies.lock().unwrap().pop().expect("scripted reply"))
        }
    }

    fn labov_reply(coda: Option<u8>) -> String {
        let mut m = serde_json::Map::new();
        for c in LabovComponent::ALL {
            m.insert(c.name().into(), json!({"score": 3, "evidence": "那天"}));
        }
        match coda {
            Some(s) => {
                m.insert("coda".into(), json!({"score": s, "evidence": "后来"}));
            }
            None => {
                m.remove("coda");
            }
        }
        Value::Object(m).to_string()
    }

    #[test]
    fn repair_round_recovers() {
        let chat = Scripted::new(vec![labov_reply(None), labov_reply(Some(2))]);
        let templates = prompts::PromptSet::builtin();
        let out = evaluate_labov(&chat, &templates, "文本").unwrap();
        match out {
            ProtocolOutcome::Accepted { value, provenance } => {
                assert!(provenance.repaired);
                assert_eq!(value.get(LabovComponent::Coda).score, 2);
            }
            other => panic!("expected acceptance, got {other:?}"),
        }
        let seen = chat.seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        let repair = &seen[1].last().unwrap().content;
        assert!(repair.contains("missing field `coda`"), "{repair}");
        assert_eq!(seen[1][seen[1].len() - 2].role, "assistant");
    }

    #[test]
    fn second_failure_marks_missing() {
        let chat = Scripted::new(vec![labov_reply(None), labov_reply(None)]);
        let templates = prompts::PromptSet::builtin();
        let out = evaluate_labov(&chat, &templates, "文本").unwrap();
        assert!(matches!(out, ProtocolOutcome::Missing { .. }));
        assert_eq!(chat.seen.lock().unwrap().len(), 2);
    }

    fn full_result() -> EvaluationResult {
        mock::mock_evaluate("s1", "我记得那天下雨。我很难过。", 0.5)
    }

    #[test]
    fn flatten_complete_and_partial() {
        let full = full_result();
        let f = flatten_l3(&full).unwrap();
        assert!(!f.missing);
        assert!(f.values.iter().all(|v| v.is_finite()));

        let mut partial = full.clone();
        partial.labov = None;
        let p = flatten_l3(&partial).unwrap();
        assert!(p.missing);
        assert_eq!(&p.values[7..13], &[0.0; 6]);
        assert_eq!(&p.values[..7], &f.values[..7]);
        assert_eq!(&p.values[13..], &f.values[13..]);

        let none = all_missing("s2", "down");
        assert!(matches!(flatten_l3(&none), Err(EvaluatorError::AllMissing(_))));
    }

    #[test]
    fn remote_chat_body_and_parse() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": "{}"}}]});
        assert_eq!(RemoteChat::parse_response(&body).unwrap(), "{}");
        assert!(RemoteChat::parse_response(&json!({"choices": []})).is_err());
    }
}
