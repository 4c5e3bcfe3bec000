use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EmbeddingVector;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding provider unreachable: {0}")]
    Transport(String),
    #[error("embedding provider returned a malformed body: {0}")]
    Malformed(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

/// Turns text into unit-length vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Offline embedder: hashes lowercase character trigrams into signed
/// buckets and normalizes. Deterministic for a given (dimension, seed).
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dimension: usize,
    seed: u64,
    latency: Duration,
}

pub const MOCK_EMBED_SEED: u64 = 0x0cea_11a5;

impl MockEmbedder {
    pub fn new(dimension: usize) -> Self {
        MockEmbedder {
            dimension,
            seed: MOCK_EMBED_SEED,
            latency: Duration::ZERO,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Adds a fixed sleep to every call, to stand in for model inference time.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    fn hash(&self, gram: &[char]) -> u64 {
        // FNV-1a over the UTF-8 bytes, seeded through the offset basis.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed;
        let mut buf = [0u8; 4];
        for c in gram {
            for b in c.encode_utf8(&mut buf).bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
        if words.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut values = vec![0f32; self.dimension];
        for word in &words {
            let padded: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for gram in padded.windows(3) {
                let h = self.hash(gram);
                let bucket = (h % self.dimension as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                values[bucket] += sign;
            }
        }
        // Hash collisions can cancel to zero on pathological input; fall
        // back to a single seeded bucket so the contract still holds.
        if values.iter().all(|v| *v == 0.0) {
            let h = self.hash(&words.concat().chars().collect::<Vec<_>>());
            values[(h % self.dimension as u64) as usize] = 1.0;
        }
        Ok(EmbeddingVector::normalized(values).expect("non-zero finite vector"))
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f32>,
}

/// Client for an embeddings endpoint accepting `{"input": [...]}` and
/// answering `{"data": [{"embedding": [...]}, ...]}`.
pub struct HttpEmbedder {
    url: String,
    model: Option<String>,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: Option<String>,
        dimension: usize,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(HttpEmbedder {
            url: url.into(),
            model,
            dimension,
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed_batch(&[text.to_string()])?;
        out.pop()
            .ok_or_else(|| EmbedError::Malformed("empty data array".into()))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let body = EmbeddingRequest {
            input: texts,
            model: self.model.as_deref(),
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if resp.status().is_server_error() {
            return Err(EmbedError::Transport(format!("status {}", resp.status())));
        }
        if !resp.status().is_success() {
            return Err(EmbedError::Malformed(format!("status {}", resp.status())));
        }
        let parsed: EmbeddingResponse = resp
            .json()
            .map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dimension {
                    return Err(EmbedError::Dimension {
                        expected: self.dimension,
                        actual: d.embedding.len(),
                    });
                }
                EmbeddingVector::normalized(d.embedding)
                    .ok_or_else(|| EmbedError::Malformed("zero or non-finite vector".into()))
            })
            .collect()
    }
}
