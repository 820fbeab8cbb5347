//! Drops training instructions that overlap benchmark instructions, by
//! word 5-gram Jaccard and embedding cosine.

use std::collections::BTreeSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::llm::EndpointDescriptor;

pub const NGRAM: usize = 5;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Http(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

/// Signed feature hashing over lowercase words. Deterministic and offline;
/// texts with no shared words are orthogonal unless two words collide.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    pub dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { dim: 4096 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0f32; self.dim];
                for word in tokens(text) {
                    let h = fnv1a(word.as_bytes());
                    let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    v[(h % self.dim as u64) as usize] += sign;
                }
                v
            })
            .collect())
    }
}

/// An OpenAI-style `/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: EndpointDescriptor,
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.endpoint.timeout_secs.max(1)))
            .build()
            .map_err(|e| EmbedError::Http(e.to_string()))?;
        let url = format!("{}/embeddings", self.endpoint.base_url.trim_end_matches('/'));
        let mut req = client.post(url).json(&json!({"model": self.endpoint.model, "input": texts}));
        if let Some(var) = &self.endpoint.api_key_env {
            let token =
                std::env::var(var).map_err(|_| EmbedError::Http(format!("environment variable {var} is not set")))?;
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| EmbedError::Http(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::Http(format!("status {status}: {body}")));
        }
        let data = body["data"].as_array().ok_or_else(|| EmbedError::Malformed("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(EmbedError::Malformed(format!("{} inputs but {} embeddings", texts.len(), data.len())));
        }
        let mut out: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (i, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map(|n| n as usize).unwrap_or(i);
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| EmbedError::Malformed("missing embedding".into()))?
                .iter()
                .map(|x| {
                    x.as_f64().map(|f| f as f32).ok_or_else(|| EmbedError::Malformed("non-numeric embedding".into()))
                })
                .collect::<Result<Vec<f32>, _>>()?;
            out.push((index, vector));
        }
        out.sort_by_key(|(i, _)| *i);
        Ok(out.into_iter().map(|(_, v)| v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combinator {
    /// Drop when either similarity is over its threshold.
    Or,
    /// Drop only when both are.
    And,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecontamConfig {
    pub jaccard_threshold: f64,
    pub cosine_threshold: f64,
    pub combinator: Combinator,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        Self { jaccard_threshold: 0.6, cosine_threshold: 0.7, combinator: Combinator::Or }
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Word 5-grams; a text shorter than five words yields its token set.
pub fn ngrams(text: &str) -> BTreeSet<Vec<String>> {
    let words: Vec<String> = tokens(text).collect();
    if words.len() < NGRAM {
        return words.into_iter().map(|w| vec![w]).collect();
    }
    words.windows(NGRAM).map(<[String]>::to_vec).collect()
}

pub fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (ngrams(a), ngrams(b));
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The closest benchmark instruction that triggered a drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contamination {
    pub bench_index: usize,
    pub jaccard: f64,
    pub cosine: f64,
}

/// Kept items, then dropped items with the match that dropped them.
pub type Split<T> = (Vec<T>, Vec<(T, Contamination)>);

/// Splits `items` into kept and dropped. Embedder failures abort the whole
/// call rather than keeping anything unchecked.
pub fn decontaminate<T>(
    items: Vec<T>,
    text_of: impl Fn(&T) -> &str,
    bench: &[String],
    embedder: &dyn Embedder,
    cfg: &DecontamConfig,
) -> Result<Split<T>, EmbedError> {
    if bench.is_empty() || items.is_empty() {
        return Ok((items, Vec::new()));
    }
    let texts: Vec<String> = items.iter().map(|i| text_of(i).to_string()).collect();
    let bench_vecs = embedder.embed(bench)?;
    let item_vecs = embedder.embed(&texts)?;
    if bench_vecs.len() != bench.len() || item_vecs.len() != texts.len() {
        return Err(EmbedError::Malformed("embedding count does not match input count".into()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for ((item, text), vec) in items.into_iter().zip(&texts).zip(&item_vecs) {
        let hit = bench.iter().zip(&bench_vecs).enumerate().find_map(|(j, (b, bv))| {
            let jac = jaccard(text, b);
            let cos = cosine(vec, bv);
            let over_j = jac > cfg.jaccard_threshold;
            let over_c = cos > cfg.cosine_threshold;
            let drop = match cfg.combinator {
                Combinator::Or => over_j || over_c,
                Combinator::And => over_j && over_c,
            };
            drop.then_some(Contamination { bench_index: j, jaccard: jac, cosine: cos })
        });
        match hit {
            Some(c) => dropped.push((item, c)),
            None => kept.push(item),
        }
    }
    Ok((kept, dropped))
}
