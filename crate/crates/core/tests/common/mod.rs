//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod criteria;

use narralyze_core::coherence::CoherenceProfile;
use narralyze_core::lexicon::{is_separator, Category, LexiconDictionary};
use narralyze_core::models::{Node, Tree};
use rand::seq::SliceRandom;
use rand::Rng;
use unicode_normalization::UnicodeNormalization;

// ---------------------------------------------------------------- lexicon

fn latin(c: char) -> bool {
    c.is_ascii_alphanumeric() || (c.is_alphabetic() && (c as u32) < 0x0250)
}

/// Every string the segmenter may emit as a multi-character token.
pub fn vocabulary(dict: &LexiconDictionary) -> Vec<Vec<char>> {
    let mut words: Vec<Vec<char>> = Category::ALL
        .iter()
        .flat_map(|&c| dict.entries(c).iter().map(|e| e.text.chars().collect()))
        .chain(dict.extra_vocabulary().iter().map(|w| w.chars().collect()))
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Forward maximum matching by scanning the whole vocabulary at every position.
pub fn naive_segment(text: &str, vocab: &[Vec<char>]) -> Vec<String> {
    let chars: Vec<char> = text.nfc().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_separator(c) {
            i += 1;
            continue;
        }
        let len = if latin(c) {
            chars[i..].iter().take_while(|&&c| latin(c)).count()
        } else {
            vocab
                .iter()
                .filter(|w| chars[i..].starts_with(w) && !w.iter().any(|&c| is_separator(c)))
                .map(Vec::len)
                .max()
                .unwrap_or(1)
                .max(1)
        };
        out.push(chars[i..i + len].iter().collect());
        i += len;
    }
    out
}

/// Category frequencies by testing every token against every entry.
pub fn naive_profile(text: &str, dict: &LexiconDictionary) -> Option<[f64; 8]> {
    let tokens = naive_segment(text, &vocabulary(dict));
    if tokens.is_empty() {
        return None;
    }
    let mut freq = [0.0; 8];
    for (k, &cat) in Category::ALL.iter().enumerate() {
        let hits = tokens
            .iter()
            .filter(|t| {
                dict.entries(cat).iter().any(|e| {
                    if e.wildcard {
                        t.starts_with(e.text.as_str())
                    } else {
                        **t == e.text
                    }
                })
            })
            .count();
        freq[k] = hits as f64 / tokens.len() as f64;
    }
    Some(freq)
}

const FILLER: &[&str] = &[
    "天", "地", "人", "山", "水", "风", "花", "雪", "月", "书", "路", "门", "猫", "狗", "车",
];
const PUNCT: &[&str] = &["，", "。", "！", "？", "、", "；", " ", "\n", "“", "”", "(", ")", "...", "—"];
const LATIN: &[&str] = &["OK", "app", "COVID19", "café", "e\u{301}t\u{e9}", "x2", "Zoë"];

/// Random text mixing dictionary words, wildcard stems with suffixes, filler
/// characters, punctuation, Latin runs and decomposed accents.
pub fn random_text<R: Rng>(rng: &mut R, dict: &LexiconDictionary, max_pieces: usize) -> String {
    let vocab: Vec<String> = vocabulary(dict).into_iter().map(|w| w.into_iter().collect()).collect();
    let n = rng.gen_range(0..=max_pieces);
    let mut s = String::new();
    for _ in 0..n {
        match rng.gen_range(0..10) {
            0..=3 => s.push_str(vocab.choose(rng).unwrap()),
            4 => {
                s.push_str(vocab.choose(rng).unwrap());
                s.push_str(FILLER.choose(rng).unwrap());
            }
            5..=6 => s.push_str(FILLER.choose(rng).unwrap()),
            7..=8 => s.push_str(PUNCT.choose(rng).unwrap()),
            _ => s.push_str(LATIN.choose(rng).unwrap()),
        }
    }
    s
}

// -------------------------------------------------------------- coherence

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (unit(a), unit(b));
    a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

/// Population standard deviation from all pairwise squared differences.
fn pairwise_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mut acc = 0.0;
    for a in v {
        for b in v {
            acc += (a - b) * (a - b);
        }
    }
    (acc / (2.0 * n * n)).sqrt()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// The seven coherence statistics computed from scratch.
pub fn naive_coherence(sentences: &[Vec<f64>], document: &[f64]) -> [f64; 7] {
    let s2d: Vec<f64> = sentences.iter().map(|s| naive_cosine(s, document)).collect();
    let s2s: Vec<f64> = (1..sentences.len())
        .map(|i| naive_cosine(&sentences[i - 1], &sentences[i]))
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m, mn, sd) = if s2s.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        (mean(&s2s), sorted(&s2s)[0], pairwise_std(&s2s))
    };
    let d = sorted(&s2d);
    [m, mn, sd, mean(&s2d), pairwise_std(&s2d), d[d.len() - 1], d[0]]
}

pub fn max_abs_diff(a: &CoherenceProfile, b: &[f64; 7]) -> f64 {
    a.values().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ------------------------------------------------------------------ trees

/// Random tree of depth ≤ `max_depth` over `d` features with consistent covers.
pub fn random_tree<R: Rng>(rng: &mut R, d: usize, max_depth: usize, outputs: usize) -> Tree {
    fn grow<R: Rng>(rng: &mut R, nodes: &mut Vec<Node>, d: usize, depth: usize, outputs: usize) -> usize {
        let id = nodes.len();
        let split = depth > 0 && (id == 0 || rng.gen_bool(0.75));
        if !split {
            let value = (0..outputs).map(|_| rng.gen_range(-2.0..2.0)).collect();
            nodes.push(Node::leaf(value, rng.gen_range(1.0..20.0)));
            return id;
        }
        nodes.push(Node::leaf(vec![0.0; outputs], 0.0));
        let feature = rng.gen_range(0..d);
        let threshold = rng.gen_range(-1.0..1.0);
        let left = grow(rng, nodes, d, depth - 1, outputs);
        let right = grow(rng, nodes, d, depth - 1, outputs);
        let (cl, cr) = (nodes[left].cover, nodes[right].cover);
        let value = (0..outputs)
            .map(|o| (cl * nodes[left].value[o] + cr * nodes[right].value[o]) / (cl + cr))
            .collect();
        nodes[id] = Node {
            feature: Some(feature),
            threshold,
            left,
            right,
            value,
            cover: cl + cr,
        };
        id
    }
    let mut nodes = Vec::new();
    grow(rng, &mut nodes, d, max_depth, outputs);
    Tree { nodes }
}

// ---------------------------------------------------------------- metrics

pub fn naive_r2(y: &[f64], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..y.len() {
        ss_res += (y[i] - p[i]).powi(2);
        ss_tot += (y[i] - mean).powi(2);
    }
    1.0 - ss_res / ss_tot
}

pub fn naive_rmse(y: &[f64], p: &[f64]) -> f64 {
    (y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
}

pub fn naive_mae(y: &[f64], p: &[f64]) -> f64 {
    y.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64
}

/// AUC by comparing every positive with every negative, ties counting half.
pub fn pairwise_auc(positive: &[bool], scores: &[f64]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Macro one-vs-rest AUC over classes present in `y`.
pub fn naive_macro_auc(y: &[usize], proba: &[Vec<f64>], classes: &[usize]) -> Option<f64> {
    let mut aucs = Vec::new();
    for (k, &c) in classes.iter().enumerate() {
        let pos: Vec<bool> = y.iter().map(|&l| l == c).collect();
        if !pos.iter().any(|&p| p) {
            continue;
        }
        let scores: Vec<f64> = proba.iter().map(|p| p[k]).collect();
        if let Some(a) = pairwise_auc(&pos, &scores) {
            aucs.push(a);
        }
    }
    (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
}

pub fn naive_balanced_accuracy(y: &[usize], pred: &[usize]) -> f64 {
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort();
    classes.dedup();
    let recalls: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let n = y.iter().filter(|&&l| l == c).count() as f64;
            let hit = y.iter().zip(pred).filter(|(&l, &p)| l == c && p == c).count() as f64;
            hit / n
        })
        .collect();
    recalls.iter().sum::<f64>() / recalls.len() as f64
}

pub fn naive_macro_f1(y: &[usize], pred: &[usize]) -> f64 {
    let mut classes: Vec<usize> = y.iter().chain(pred).copied().collect();
    classes.sort();
    classes.dedup();
    let f1s: Vec<f64> = classes
        .iter()
        .map(|&c| {
            let tp = y.iter().zip(pred).filter(|(&l, &p)| l == c && p == c).count() as f64;
            let fp = y.iter().zip(pred).filter(|(&l, &p)| l != c && p == c).count() as f64;
            let fn_ = y.iter().zip(pred).filter(|(&l, &p)| l == c && p != c).count() as f64;
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .collect();
    f1s.iter().sum::<f64>() / f1s.len() as f64
}
