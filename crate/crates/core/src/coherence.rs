//! Semantic coherence from sentence embeddings.
//!
//! Local coherence uses cosines between adjacent sentences (`s2s_*`); global
//! coherence uses cosines between each sentence and the whole-document
//! embedding (`s2d_*`). Standard deviations are population deviations.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::providers::{sha256_hex, ContentStore, ProviderClient, ProviderError};

pub const DEFAULT_DIMENSION: usize = 1536;

#[derive(Debug, Error)]
pub enum CoherenceError {
    #[error("text has no sentences")]
    NoSentences,
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("embedding protocol error: expected {expected}, got {actual}")]
    Protocol { expected: String, actual: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

const TERMINATORS: [char; 6] = ['。', '！', '？', '；', '…', '\n'];
const CLOSERS: [char; 14] = [
    '」', '』', '”', '’', '）', ')', '】', '》', '〉', '"', '\'', '］', ']', '〕',
];

/// Splits on `。！？；…` and newlines. Runs of terminators and any closing
/// quotes or brackets that follow stay with the preceding sentence. Newlines
/// themselves are dropped; blank fragments are discarded.
pub fn split_sentences(text: &str) -> Result<Vec<String>, CoherenceError> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut i = 0;
    let mut flush = |current: &mut String| {
        let trimmed = current.trim();
        if !trimmed.is_empty() {
            sentences.push(trimmed.to_string());
        }
        current.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            flush(&mut current);
            i += 1;
            continue;
        }
        current.push(c);
        i += 1;
        if TERMINATORS.contains(&c) {
            while i < chars.len() && chars[i] != '\n' && TERMINATORS.contains(&chars[i]) {
                current.push(chars[i]);
                i += 1;
            }
            while i < chars.len() && CLOSERS.contains(&chars[i]) {
                current.push(chars[i]);
                i += 1;
            }
            flush(&mut current);
        }
    }
    flush(&mut current);
    if sentences.is_empty() {
        return Err(CoherenceError::NoSentences);
    }
    Ok(sentences)
}

fn check_finite(v: &[f64]) -> Result<(), CoherenceError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(CoherenceError::NonFinite)
    }
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, CoherenceError> {
    if u.len() != v.len() {
        return Err(CoherenceError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    check_finite(u)?;
    check_finite(v)?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(CoherenceError::ZeroNorm);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceProfile {
    pub s2s_mean: f64,
    pub s2s_min: f64,
    pub s2s_std: f64,
    pub s2d_mean: f64,
    pub s2d_std: f64,
    pub s2d_max: f64,
    pub s2d_min: f64,
    pub n_sentences: usize,
    /// Fewer than two sentences: the `s2s_*` values are zero-filled.
    pub degenerate: bool,
}

impl CoherenceProfile {
    pub const COLUMNS: [&'static str; 7] = [
        "s2s_mean", "s2s_min", "s2s_std", "s2d_mean", "s2d_std", "s2d_max", "s2d_min",
    ];

    pub fn values(&self) -> [f64; 7] {
        [
            self.s2s_mean,
            self.s2s_min,
            self.s2s_std,
            self.s2d_mean,
            self.s2d_std,
            self.s2d_max,
            self.s2d_min,
        ]
    }
}

struct Summary {
    mean: f64,
    std: f64,
    min: f64,
    max: f64,
}

fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Summary {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn coherence_profile(
    sentences: &[Vec<f64>],
    document: &[f64],
) -> Result<CoherenceProfile, CoherenceError> {
    if sentences.is_empty() {
        return Err(CoherenceError::NoSentences);
    }
    let s2d: Vec<f64> = sentences
        .iter()
        .map(|s| cosine(s, document))
        .collect::<Result<_, _>>()?;
    let s2s: Vec<f64> = sentences
        .windows(2)
        .map(|w| cosine(&w[0], &w[1]))
        .collect::<Result<_, _>>()?;
    let global = summarize(&s2d);
    let (s2s_mean, s2s_min, s2s_std) = if s2s.is_empty() {
        (0.0, 0.0, 0.0)
    } else {
        let local = summarize(&s2s);
        (local.mean, local.min, local.std)
    };
    Ok(CoherenceProfile {
        s2s_mean,
        s2s_min,
        s2s_std,
        s2d_mean: global.mean,
        s2d_std: global.std,
        s2d_max: global.max,
        s2d_min: global.min,
        n_sentences: sentences.len(),
        degenerate: s2s.is_empty(),
    })
}

/// Turns texts into equal-length vectors, in input order.
pub trait Embedder: Send + Sync {
    fn model_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CoherenceError>;
}

/// Offline stand-in: hashed character 1-3-gram counts projected through a
/// seeded random ±1 matrix and L2-normalized. Similarity follows surface
/// overlap, not meaning.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dimension: usize,
    buckets: usize,
    signs: Arc<Vec<u64>>,
    words_per_bucket: usize,
    model_id: String,
}

impl MockEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        let buckets = 4096;
        let words_per_bucket = dimension.div_ceil(64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let signs = (0..buckets * words_per_bucket).map(|_| rng.gen()).collect();
        MockEmbedder {
            dimension,
            buckets,
            signs: Arc::new(signs),
            words_per_bucket,
            model_id: format!("mock-ngram-{dimension}-{seed}"),
        }
    }

    fn bucket(&self, gram: &[char]) -> usize {
        // FNV-1a over the code points, salted with the n-gram length.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ gram.len() as u64;
        for &c in gram {
            for b in (c as u32).to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        (h % self.buckets as u64) as usize
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut counts = vec![0u32; self.buckets];
        for n in 1..=3 {
            for gram in chars.windows(n) {
                counts[self.bucket(gram)] += 1;
            }
        }
        let mut v = vec![0.0; self.dimension];
        for (b, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let count = f64::from(count);
            let row = &self.signs[b * self.words_per_bucket..(b + 1) * self.words_per_bucket];
            for (j, x) in v.iter_mut().enumerate() {
                if row[j / 64] >> (j % 64) & 1 == 1 {
                    *x += count;
                } else {
                    *x -= count;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            // Empty text: a fixed unit vector keeps the output unit-norm.
            v[0] = 1.0;
        }
        v
    }
}

impl Embedder for MockEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CoherenceError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// OpenAI-compatible `POST {base_url}/embeddings`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    client: Arc<ProviderClient>,
    dimension: usize,
}

impl RemoteEmbedder {
    pub fn new(client: Arc<ProviderClient>, dimension: usize) -> Self {
        RemoteEmbedder { client, dimension }
    }

    pub fn request_body(&self, texts: &[String]) -> Value {
        json!({ "model": self.client.config().model_id, "input": texts })
    }

    pub fn parse_response(&self, response: &Value, expected: usize) -> Result<Vec<Vec<f64>>, CoherenceError> {
        let data = response
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| CoherenceError::Protocol {
                expected: "object with a `data` array".into(),
                actual: truncate(&response.to_string()),
            })?;
        if data.len() != expected {
            return Err(CoherenceError::Protocol {
                expected: format!("{expected} embeddings"),
                actual: format!("{} embeddings", data.len()),
            });
        }
        data.iter()
            .map(|item| {
                let values = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| CoherenceError::Protocol {
                        expected: "`embedding` array".into(),
                        actual: truncate(&item.to_string()),
                    })?;
                if values.len() != self.dimension {
                    return Err(CoherenceError::Protocol {
                        expected: format!("dimension {}", self.dimension),
                        actual: format!("dimension {}", values.len()),
                    });
                }
                values
                    .iter()
                    .map(|x| x.as_f64().ok_or(CoherenceError::NonFinite))
                    .collect()
            })
            .collect()
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(120).collect()
}

impl Embedder for RemoteEmbedder {
    fn model_id(&self) -> &str {
        &self.client.config().model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CoherenceError> {
        let response = self.client.send("embeddings", &self.request_body(texts))?;
        self.parse_response(&response, texts.len())
    }
}

/// Per-text embedding cache keyed by SHA-256 of (model, text).
pub struct CachedEmbedder<E> {
    inner: E,
    store: Option<ContentStore>,
    offline: bool,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, store: Option<ContentStore>) -> Self {
        CachedEmbedder {
            inner,
            store,
            offline: false,
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    /// With `offline`, misses fail instead of reaching the inner embedder.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn key(model: &str, text: &str) -> String {
        let mut bytes = Vec::with_capacity(model.len() + text.len() + 1);
        bytes.extend_from_slice(model.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(text.as_bytes());
        sha256_hex(&bytes)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CoherenceError> {
        let Some(store) = &self.store else {
            return self.inner.embed(texts);
        };
        let model = self.inner.model_id();
        let mut out: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        let mut missing = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            let cached = store
                .read(&Self::key(model, t))
                .and_then(|v| serde_json::from_value::<Vec<f64>>(v).ok())
                .filter(|v| v.len() == self.dimension());
            match cached {
                Some(v) => out[i] = Some(v),
                None => missing.push(i),
            }
        }
        self.hits
            .fetch_add((texts.len() - missing.len()) as u64, Ordering::SeqCst);
        if !missing.is_empty() {
            if self.offline {
                return Err(ProviderError::OfflineMiss {
                    hash: Self::key(model, &texts[missing[0]]),
                }
                .into());
            }
            self.misses.fetch_add(missing.len() as u64, Ordering::SeqCst);
            let batch: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.inner.embed(&batch)?;
            for (&i, v) in missing.iter().zip(fresh) {
                store.write(&Self::key(model, &texts[i]), &json!(v))?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentEmbeddings {
    pub sentences: Vec<Vec<f64>>,
    pub document: Vec<f64>,
}

/// One embedding per sentence plus one for the full text, in a single batch.
pub fn embed_document(text: &str, embedder: &dyn Embedder) -> Result<DocumentEmbeddings, CoherenceError> {
    let mut inputs = split_sentences(text)?;
    let n = inputs.len();
    inputs.push(text.to_string());
    let mut vectors = embedder.embed(&inputs)?;
    if vectors.len() != n + 1 {
        return Err(CoherenceError::Protocol {
            expected: format!("{} embeddings", n + 1),
            actual: format!("{} embeddings", vectors.len()),
        });
    }
    for v in &vectors {
        if v.len() != embedder.dimension() {
            return Err(CoherenceError::Protocol {
                expected: format!("dimension {}", embedder.dimension()),
                actual: format!("dimension {}", v.len()),
            });
        }
        check_finite(v)?;
    }
    let document = vectors.pop().expect("n + 1 vectors");
    Ok(DocumentEmbeddings {
        sentences: vectors,
        document,
    })
}

pub fn analyze(text: &str, embedder: &dyn Embedder) -> Result<CoherenceProfile, CoherenceError> {
    let doc = embed_document(text, embedder)?;
    coherence_profile(&doc.sentences, &doc.document)
}
