mod common;

use narralyze_core::lexicon::{profile, segment, LexiconDictionary, LexiconError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn profile_matches_naive_oracle_on_random_texts() {
    let dict = LexiconDictionary::demo();
    let vocab = common::vocabulary(&dict);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e71c0);
    for i in 0..1000 {
        let text = common::random_text(&mut rng, &dict, 60);
        assert_eq!(segment(&text, &dict), common::naive_segment(&text, &vocab), "text {i}: {text:?}");
        match (profile(&text, &dict), common::naive_profile(&text, &dict)) {
            (Ok(p), Some(f)) => assert_eq!(p.frequencies, f, "text {i}: {text:?}"),
            (Err(LexiconError::NoTokens), None) => {}
            (got, want) => panic!("text {i}: {text:?}: {got:?} vs {want:?}"),
        }
    }
}

#[test]
fn custom_dictionary_with_overlapping_words() {
    let dict = LexiconDictionary::parse(
        "[i]\n我\n我们\n[negemo]\n伤*\n难过\n[vocabulary]\n我们的\n伤心事\n",
    )
    .unwrap();
    let text = "我们的伤心事让我难过。伤口";
    assert_eq!(segment(text, &dict), ["我们的", "伤心事", "让", "我", "难过", "伤", "口"]);
    let p = profile(text, &dict).unwrap();
    assert_eq!(p.frequencies, common::naive_profile(text, &dict).unwrap());
}

fn arb_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("我".to_string()),
            Just("我们".to_string()),
            Just("难过".to_string()),
            Just("伤心".to_string()),
            Just("。".to_string()),
            Just(" ".to_string()),
            "[a-zA-Z0-9]{1,4}",
            "[\u{4e00}-\u{4e20}]{1,3}",
        ],
        0..40,
    )
    .prop_map(|v| v.concat())
}

proptest! {
    #[test]
    fn frequencies_lie_in_unit_interval(text in arb_text()) {
        let dict = LexiconDictionary::demo();
        if let Ok(p) = profile(&text, &dict) {
            prop_assert!(p.frequencies.iter().all(|f| (0.0..=1.0).contains(f)));
            prop_assert_eq!(p.token_count, segment(&text, &dict).len());
        }
    }

    #[test]
    fn tokens_cover_every_non_separator_character(text in arb_text()) {
        let dict = LexiconDictionary::demo();
        let joined: String = segment(&text, &dict).concat();
        let kept: String = text.chars().filter(|c| !narralyze_core::lexicon::is_separator(*c)).collect();
        prop_assert_eq!(joined, kept);
    }

    #[test]
    fn doubling_text_keeps_frequencies(text in arb_text()) {
        let dict = LexiconDictionary::demo();
        let doubled = format!("{text}。{text}");
        if let (Ok(a), Ok(b)) = (profile(&text, &dict), profile(&doubled, &dict)) {
            for (x, y) in a.frequencies.iter().zip(b.frequencies) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
