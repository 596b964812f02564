mod common;

use std::collections::VecDeque;
use std::sync::Mutex;

use narralyze_core::evaluator::mock::{clinical_reply, labov_reply, propositional_reply};
use narralyze_core::evaluator::{
    evaluate, flatten_l3, l3_columns, ChatClient, ChatMessage, EvaluatorError, PromptSet, Protocol, L3_WIDTH,
};
use narralyze_core::providers::ProviderError;

const TEXT: &str = "那年冬天我一个人回到老家。院子里的树都枯了。我想起很多小时候的事。后来我决定留下来。";

#[test]
fn schema_suite_on_synthetic_texts() {
    common::criteria::evaluator_schema_suite(40, 11).unwrap();
}

/// Replies from a fixed script, recording every request.
struct Scripted {
    replies: Mutex<VecDeque<Result<String, EvaluatorError>>>,
    seen: Mutex<Vec<Vec<ChatMessage>>>,
}

impl Scripted {
    fn new(replies: Vec<Result<String, EvaluatorError>>) -> Self {
        Scripted {
            replies: Mutex::new(replies.into()),
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
        self.replies.lock().unwrap().pop_front().expect("script long enough")
    }
}

fn valid_replies() -> [String; 3] {
    [
        propositional_reply(TEXT, 0.4).to_string(),
        labov_reply(TEXT, 0.4).to_string(),
        clinical_reply(TEXT, 0.4).to_string(),
    ]
}

#[test]
fn one_repair_round_recovers_a_bad_reply() {
    let [p, l, c] = valid_replies();
    let chat = Scripted::new(vec![Ok("{\"propositions\": []}".into()), Ok(p), Ok(l), Ok(c)]);
    let r = evaluate(&chat, &PromptSet::builtin(), "s1", TEXT).unwrap();
    assert!(!r.any_missing());
    let repaired: Vec<(Protocol, bool)> = r.provenance.iter().map(|p| (p.protocol, p.repaired)).collect();
    assert_eq!(
        repaired,
        [(Protocol::Propositional, true), (Protocol::Labov, false), (Protocol::Clinical, false)]
    );
    let seen = chat.seen.lock().unwrap();
    let repair = &seen[1];
    assert_eq!(repair.len(), 4);
    assert_eq!(repair[2].role, "assistant");
    assert!(repair[3].content.contains("propositions"), "repair names the failure");
}

#[test]
fn second_failure_marks_protocol_missing() {
    let [_, l, c] = valid_replies();
    let chat = Scripted::new(vec![Ok("not json".into()), Ok("{\"dimensions\": 3}".into()), Ok(l), Ok(c)]);
    let r = evaluate(&chat, &PromptSet::builtin(), "s2", TEXT).unwrap();
    assert!(r.propositional.is_none() && r.labov.is_some() && r.clinical.is_some());
    assert_eq!(r.failures.len(), 1);
    assert_eq!(r.failures[0].protocol, Protocol::Propositional);

    let f = flatten_l3(&r).unwrap();
    assert!(f.missing);
    assert_eq!(f.values.len(), L3_WIDTH);
    assert_eq!(l3_columns().len(), L3_WIDTH);
    // The propositional block (ratios, grounding, RST) is zero-filled.
    assert!(f.values[..7].iter().all(|v| *v == 0.0));
}

#[test]
fn provider_errors_propagate() {
    let chat = Scripted::new(vec![Err(EvaluatorError::Provider(ProviderError::Auth { status: 401 }))]);
    let r = evaluate(&chat, &PromptSet::builtin(), "s3", TEXT);
    assert!(matches!(r, Err(EvaluatorError::Provider(ProviderError::Auth { .. }))));
}

#[test]
fn prompt_hash_is_stable_and_text_dependent() {
    let [p, l, c] = valid_replies();
    let run = |text: &str| {
        let chat = Scripted::new(vec![Ok(p.clone()), Ok(l.clone()), Ok(c.clone())]);
        evaluate(&chat, &PromptSet::builtin(), "s", text).unwrap().provenance
    };
    assert_eq!(run(TEXT), run(TEXT));
    assert_ne!(run(TEXT)[0].prompt_hash, run("另一段文字。")[0].prompt_hash);
}
