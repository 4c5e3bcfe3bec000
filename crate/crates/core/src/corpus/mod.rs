//! Corpus ingestion and sentence-level vector retrieval.
//!
//! Raw documents are split into paragraphs on blank lines, paragraphs into
//! sentences, and every sentence is embedded into a unit-length vector.
//! Searches rank sentences by cosine similarity and hand back the parent
//! paragraph alongside the matched sentence.

mod chunk;
mod embed;
mod hnsw;
mod index;
mod ingest;
mod retrieve;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use chunk::{split_paragraphs, split_sentences, ABBREVIATIONS};
pub use embed::{EmbedError, Embedder, HttpEmbedder, MockEmbedder};
pub use hnsw::HnswParams;
pub use index::{IndexError, VectorIndex, INDEX_MAGIC, INDEX_VERSION};
pub use ingest::{ingest_corpus, ingest_documents, IngestError, SourceDocument};
pub use retrieve::{retrieve, RetrieveError};

/// Default embedding dimension (MiniLM-class sentence encoders).
pub const DEFAULT_DIMENSION: usize = 384;
/// Default number of distinct paragraphs returned by [`retrieve`].
pub const DEFAULT_TOP_K: usize = 2;

macro_rules! id_newtype {
    ($name:ident, $prefix:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(DocId, "d");
id_newtype!(ParaId, "p");
id_newtype!(SentId, "s");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DocKind {
    EcoArtText,
    ScientificNote,
    DatasetDescription,
}

impl DocKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocKind::EcoArtText => "eco-art-text",
            DocKind::ScientificNote => "scientific-note",
            DocKind::DatasetDescription => "dataset-description",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "eco-art-text" => Some(DocKind::EcoArtText),
            "scientific-note" => Some(DocKind::ScientificNote),
            "dataset-description" => Some(DocKind::DatasetDescription),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            DocKind::EcoArtText => 0,
            DocKind::ScientificNote => 1,
            DocKind::DatasetDescription => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DocKind::EcoArtText),
            1 => Some(DocKind::ScientificNote),
            2 => Some(DocKind::DatasetDescription),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: DocId,
    pub title: String,
    pub source_path: String,
    pub kind: DocKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: ParaId,
    pub doc_id: DocId,
    pub text: String,
    pub sentence_ids: Vec<SentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sent_id: SentId,
    pub para_id: ParaId,
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// A finite, fixed-length embedding. Vectors produced by [`Embedder`]s and
/// stored in a [`VectorIndex`] are unit-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Wraps raw values, rejecting empty or non-finite input.
    pub fn new(values: Vec<f32>) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(EmbeddingVector(values))
    }

    /// Wraps and L2-normalizes. Returns `None` for zero vectors.
    pub fn normalized(values: Vec<f32>) -> Option<Self> {
        let mut v = Self::new(values)?;
        let norm = v.norm();
        if norm == 0.0 || !norm.is_finite() {
            return None;
        }
        for x in &mut v.0 {
            *x /= norm;
        }
        Some(v)
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|x| x * x).sum::<f32>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        dot(&self.0, &other.0)
    }
}

/// Plain sequential dot product. Search scores are always computed through
/// this function so exact results are reproducible bit for bit.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub sent_id: SentId,
    pub para_id: ParaId,
    pub score: f32,
    pub sentence_text: String,
    pub paragraph_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k: usize,
    pub ann_enabled: bool,
    pub dimension: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: DEFAULT_TOP_K,
            ann_enabled: true,
            dimension: DEFAULT_DIMENSION,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("retrieval k must be at least 1".into());
        }
        if self.dimension == 0 {
            return Err("embedding dimension must be at least 1".into());
        }
        Ok(())
    }
}
