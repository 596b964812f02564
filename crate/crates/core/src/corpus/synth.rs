//! Seeded synthetic corpora with planted severity signal.
//!
//! Each sample gets a latent distress value `d` in [0, 1). Instrument scores
//! are `d` plus small per-condition noise. Three independent channels carry
//! `d` into the features, each mixed as `s * d + (1 - s) * u` with its own
//! uniform nuisance `u` and `s = signal_strength`:
//!
//! * lexical: the rate of negative-emotion words in the text,
//! * coherence: the rate of topic switches between sentences, which the mock
//!   embedder sees as lower adjacent-sentence similarity,
//! * narrative: the planted severity handed to the mock evaluator.
//!
//! With `s = 0` every channel is independent of the outcomes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Condition, Corpus, CorpusError, Gender, InstrumentScore, WritingSample};
use super::{word_count, MIN_ELIGIBLE_TOKENS};
use crate::lexicon::{Category, LexiconDictionary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub signal_strength: f64,
    pub seed: u64,
    /// Proportions of equal-width latent distress bands, low to high.
    pub severity_mix: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 800,
            signal_strength: 0.8,
            seed: 7,
            severity_mix: vec![0.4, 0.3, 0.2, 0.1],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: &str| Err(CorpusError::SynthConfig(m.to_string()));
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad("signal_strength must lie in [0, 1]");
        }
        if self.severity_mix.is_empty() {
            return bad("severity_mix must not be empty");
        }
        if self.severity_mix.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return bad("severity_mix proportions must be non-negative");
        }
        let total: f64 = self.severity_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad("severity_mix must sum to 1");
        }
        Ok(())
    }
}

/// Generator-side truth for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub latent: f64,
    /// Severity handed to the mock narrative evaluator.
    pub planted_severity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub truth: Vec<GroundTruth>,
}

const TOPICS: [[&str; 10]; 5] = [
    ["课程", "考试", "作业", "教室", "黑板", "书包", "校园", "铅笔", "试卷", "班级"],
    ["厨房", "客厅", "窗户", "晚饭", "沙发", "电视", "阳台", "桌子", "床铺", "楼梯"],
    ["公园", "树木", "花草", "河边", "山路", "天空", "雨水", "阳光", "草地", "湖水"],
    ["街道", "商店", "地铁", "公交", "马路", "车站", "广场", "超市", "银行", "餐厅"],
    ["医院", "医生", "护士", "药片", "病房", "检查", "门诊", "挂号", "针头", "诊室"],
];

/// Filler words used by the generator; none of them hits a lexical category.
pub fn filler_words() -> impl Iterator<Item = &'static str> {
    TOPICS.iter().flat_map(|t| t.iter().copied())
}

struct Instruments {
    depression: (&'static str, f64),
    anxiety: (&'static str, f64),
    trauma: (&'static str, f64),
}

const YOUTH: Instruments = Instruments {
    depression: ("PHQ-9", 27.0),
    anxiety: ("GAD-7", 21.0),
    trauma: ("CRIES-13", 65.0),
};
const ADULT: Instruments = Instruments {
    depression: ("BDI-II", 63.0),
    anxiety: ("BAI", 63.0),
    trauma: ("PSSI-5", 80.0),
};

const TERMINATORS: [&str; 3] = ["。", "！", "？"];

pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticCorpus, CorpusError> {
    config.validate()?;
    let dict = LexiconDictionary::demo();
    let words = |c: Category| -> Vec<String> {
        dict.entries(c)
            .iter()
            .map(|e| e.text.clone())
            .collect()
    };
    let lexical: Vec<(Category, Vec<String>)> = Category::ALL.iter().map(|&c| (c, words(c))).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let score_noise = Normal::new(0.0, 0.03).expect("valid sigma");
    let s = config.signal_strength;
    let bands = config.severity_mix.len() as f64;

    let mut samples = Vec::with_capacity(config.n_samples);
    let mut truth = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let band = pick_band(&mut rng, &config.severity_mix);
        let latent = (band as f64 + rng.gen::<f64>()) / bands;
        let mix = |rng: &mut ChaCha8Rng| s * latent + (1.0 - s) * rng.gen::<f64>();
        let lexical_channel = mix(&mut rng);
        let coherence_channel = mix(&mut rng);
        let narrative_channel = mix(&mut rng);
        let demographic_channel = mix(&mut rng);

        let text = compose_text(&mut rng, &dict, &lexical, lexical_channel, coherence_channel);

        let youth = rng.gen_bool(0.5);
        let age = if rng.gen_bool(0.02) {
            None
        } else {
            let (lo, span) = if youth { (9.0, 9.0) } else { (18.0, 32.0) };
            let pos = (0.5 * demographic_channel + 0.5 * rng.gen::<f64>()).clamp(0.0, 1.0);
            Some(((lo + span * pos) * 10.0_f64).round() / 10.0)
        };
        let gender = match rng.gen_range(0..100) {
            0..=59 => Gender::Female,
            60..=97 => Gender::Male,
            _ => Gender::Unspecified,
        };
        let inst = if youth { &YOUTH } else { &ADULT };
        let mut scores = Vec::with_capacity(3);
        for (condition, (name, max)) in [
            (Condition::Depression, inst.depression),
            (Condition::Anxiety, inst.anxiety),
            (Condition::Trauma, inst.trauma),
        ] {
            let normalized = (latent + score_noise.sample(&mut rng)).clamp(0.0, 1.0);
            scores.push(InstrumentScore {
                condition,
                instrument_id: name.to_string(),
                raw: (normalized * max).round(),
                max,
            });
        }
        let id = format!("syn-{i:05}");
        samples.push(WritingSample {
            id: id.clone(),
            text,
            age,
            gender,
            cohort: if youth { "synthetic-youth" } else { "synthetic-adult" }.to_string(),
            instrument_scores: scores,
        });
        truth.push(GroundTruth {
            id,
            latent,
            planted_severity: narrative_channel,
        });
    }
    Ok(SyntheticCorpus {
        corpus: Corpus { samples },
        truth,
    })
}

fn pick_band(rng: &mut ChaCha8Rng, mix: &[f64]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in mix.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    mix.len() - 1
}

fn category_rate(category: Category, lexical_channel: f64) -> f64 {
    match category {
        Category::Negemo => 0.02 + 0.14 * lexical_channel,
        Category::I => 0.05,
        Category::Social => 0.04,
        Category::Focuspast => 0.03,
        Category::Negate => 0.03,
        Category::Certain => 0.015,
        Category::Discrep => 0.015,
        Category::Death => 0.004,
    }
}

fn compose_text(
    rng: &mut ChaCha8Rng,
    dict: &LexiconDictionary,
    lexical: &[(Category, Vec<String>)],
    lexical_channel: f64,
    coherence_channel: f64,
) -> String {
    let switch_rate = 0.1 + 0.7 * coherence_channel;
    let rates: Vec<f64> = lexical
        .iter()
        .map(|(c, _)| category_rate(*c, lexical_channel))
        .collect();

    let mut text = String::new();
    let mut topic = rng.gen_range(0..TOPICS.len());
    // Filler words split into two single-character tokens, lexical words
    // usually stay whole.
    let mut slots = 0;
    let target_slots = rng.gen_range(80..120);
    let mut first = true;
    while slots < target_slots || word_count(&text, dict) <= MIN_ELIGIBLE_TOKENS {
        if !first && rng.gen_bool(switch_rate) {
            let next = rng.gen_range(0..TOPICS.len() - 1);
            topic = if next >= topic { next + 1 } else { next };
        }
        first = false;
        let len = rng.gen_range(6..12);
        for _ in 0..len {
            let r: f64 = rng.gen();
            let mut acc = 0.0;
            let mut word = None;
            for ((_, list), rate) in lexical.iter().zip(&rates) {
                acc += rate;
                if r < acc {
                    word = list.choose(rng).map(String::as_str);
                    break;
                }
            }
            text.push_str(word.unwrap_or_else(|| TOPICS[topic].choose(rng).expect("non-empty")));
        }
        slots += len;
        text.push_str(TERMINATORS.choose(rng).expect("non-empty"));
    }
    text
}
