use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::hnsw::{HnswGraph, HnswParams};
use super::{
    dot, DocId, DocKind, DocumentRecord, EmbeddingVector, ParaId, Paragraph, RetrievalHit,
    SentId, SentenceRecord,
};

pub const INDEX_MAGIC: [u8; 8] = *b"OCEANIDX";
pub const INDEX_VERSION: u32 = 1;
const NO_ENTRY: u32 = u32::MAX;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("embedding dimension mismatch: index is {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("sentence {sent} references unknown paragraph {para}")]
    UnknownParagraph { sent: SentId, para: ParaId },
    #[error("paragraph {para} references unknown document {doc}")]
    UnknownDocument { para: ParaId, doc: DocId },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("index file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an index file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported index file version {0}")]
    UnsupportedVersion(u32),
    #[error("index file checksum mismatch")]
    Checksum,
    #[error("corrupt index file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq)]
struct SentenceMeta {
    sent_id: SentId,
    para_id: ParaId,
    text: String,
}

/// Immutable sentence index supporting exact and graph-based search.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    documents: Vec<DocumentRecord>,
    paragraphs: Vec<Paragraph>,
    para_pos: HashMap<ParaId, usize>,
    sentences: Vec<SentenceMeta>,
    vectors: Vec<f32>,
    graph: HnswGraph,
}

impl VectorIndex {
    pub fn empty(dim: usize) -> Self {
        Self::build(dim, Vec::new(), Vec::new(), Vec::new(), HnswParams::default())
            .expect("empty index is valid")
    }

    /// Builds an index from fully described corpus records. Sentence
    /// embeddings are re-normalized to unit length.
    pub fn build(
        dim: usize,
        documents: Vec<DocumentRecord>,
        paragraphs: Vec<Paragraph>,
        sentences: Vec<SentenceRecord>,
        params: HnswParams,
    ) -> Result<Self, IndexError> {
        if dim == 0 {
            return Err(IndexError::InvalidRecord("dimension must be positive".into()));
        }
        let mut doc_ids = HashSet::new();
        for d in &documents {
            if !doc_ids.insert(d.doc_id) {
                return Err(IndexError::DuplicateId(d.doc_id.to_string()));
            }
            if d.title.trim().is_empty() {
                return Err(IndexError::InvalidRecord(format!("document {} has empty title", d.doc_id)));
            }
        }
        let mut para_pos = HashMap::with_capacity(paragraphs.len());
        for (i, p) in paragraphs.iter().enumerate() {
            if para_pos.insert(p.para_id, i).is_some() {
                return Err(IndexError::DuplicateId(p.para_id.to_string()));
            }
            if !doc_ids.contains(&p.doc_id) {
                return Err(IndexError::UnknownDocument {
                    para: p.para_id,
                    doc: p.doc_id,
                });
            }
            if p.text.trim().is_empty() || p.sentence_ids.is_empty() {
                return Err(IndexError::InvalidRecord(format!("paragraph {} is empty", p.para_id)));
            }
        }
        let mut sent_ids = HashSet::with_capacity(sentences.len());
        let mut metas = Vec::with_capacity(sentences.len());
        let mut vectors = Vec::with_capacity(sentences.len() * dim);
        for s in sentences {
            if s.embedding.dimension() != dim {
                return Err(IndexError::Dimension {
                    expected: dim,
                    actual: s.embedding.dimension(),
                });
            }
            if !sent_ids.insert(s.sent_id) {
                return Err(IndexError::DuplicateId(s.sent_id.to_string()));
            }
            if !para_pos.contains_key(&s.para_id) {
                return Err(IndexError::UnknownParagraph {
                    sent: s.sent_id,
                    para: s.para_id,
                });
            }
            let unit = EmbeddingVector::normalized(s.embedding.into_values()).ok_or_else(|| {
                IndexError::InvalidRecord(format!("sentence {} has a zero embedding", s.sent_id))
            })?;
            vectors.extend_from_slice(unit.values());
            metas.push(SentenceMeta {
                sent_id: s.sent_id,
                para_id: s.para_id,
                text: s.text,
            });
        }
        let graph = HnswGraph::build(&vectors, dim, params);
        Ok(VectorIndex {
            dim,
            documents,
            paragraphs,
            para_pos,
            sentences: metas,
            vectors,
            graph,
        })
    }

    /// Builds an index from bare sentence records. Each distinct `para_id`
    /// becomes a paragraph whose text is its sentences joined in order,
    /// owned by a single synthetic document.
    pub fn from_sentences(dim: usize, records: Vec<SentenceRecord>) -> Result<Self, IndexError> {
        let mut grouped: BTreeMap<ParaId, Vec<(SentId, String)>> = BTreeMap::new();
        for r in &records {
            grouped
                .entry(r.para_id)
                .or_default()
                .push((r.sent_id, r.text.clone()));
        }
        let doc = DocumentRecord {
            doc_id: DocId(0),
            title: "synthetic".into(),
            source_path: String::new(),
            kind: DocKind::DatasetDescription,
        };
        let paragraphs = grouped
            .into_iter()
            .map(|(para_id, sents)| Paragraph {
                para_id,
                doc_id: DocId(0),
                text: sents.iter().map(|(_, t)| t.as_str()).collect::<Vec<_>>().join(" "),
                sentence_ids: sents.iter().map(|(id, _)| *id).collect(),
            })
            .collect();
        Self::build(dim, vec![doc], paragraphs, records, HnswParams::default())
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn documents(&self) -> &[DocumentRecord] {
        &self.documents
    }

    pub fn paragraphs(&self) -> &[Paragraph] {
        &self.paragraphs
    }

    pub fn params(&self) -> HnswParams {
        self.graph.params
    }

    pub fn paragraph(&self, id: ParaId) -> Option<&Paragraph> {
        self.para_pos.get(&id).map(|&i| &self.paragraphs[i])
    }

    pub fn embedding(&self, pos: usize) -> &[f32] {
        &self.vectors[pos * self.dim..(pos + 1) * self.dim]
    }

    fn check_query(&self, query: &EmbeddingVector) -> Result<(), IndexError> {
        if query.dimension() != self.dim {
            return Err(IndexError::Dimension {
                expected: self.dim,
                actual: query.dimension(),
            });
        }
        Ok(())
    }

    fn order(&self, a: &(usize, f32), b: &(usize, f32)) -> std::cmp::Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.sentences[a.0].sent_id.cmp(&self.sentences[b.0].sent_id))
    }

    /// Every stored sentence scored against `query`, best first.
    pub(crate) fn rank_all(&self, query: &[f32]) -> Vec<(usize, f32)> {
        let mut scored: Vec<(usize, f32)> = (0..self.sentences.len())
            .map(|i| (i, dot(query, self.embedding(i))))
            .collect();
        scored.sort_by(|a, b| self.order(a, b));
        scored
    }

    pub(crate) fn ann_candidates(&self, query: &[f32], want: usize) -> Vec<(usize, f32)> {
        let ef = self.graph.params.ef_search.max(want);
        if self.sentences.len() <= ef {
            let mut all = self.rank_all(query);
            all.truncate(want);
            return all;
        }
        let mut found: Vec<(usize, f32)> = self
            .graph
            .search(&self.vectors, self.dim, query, ef)
            .into_iter()
            .map(|(n, _)| (n as usize, dot(query, self.embedding(n as usize))))
            .collect();
        found.sort_by(|a, b| self.order(a, b));
        found.truncate(want);
        found
    }

    pub(crate) fn hit(&self, pos: usize, score: f32) -> RetrievalHit {
        let s = &self.sentences[pos];
        let paragraph_text = self
            .paragraph(s.para_id)
            .map(|p| p.text.clone())
            .unwrap_or_default();
        RetrievalHit {
            sent_id: s.sent_id,
            para_id: s.para_id,
            score: score.clamp(-1.0, 1.0),
            sentence_text: s.text.clone(),
            paragraph_text,
        }
    }

    pub(crate) fn para_of(&self, pos: usize) -> ParaId {
        self.sentences[pos].para_id
    }

    /// Exact top-k by cosine similarity; ties go to the smaller sentence id.
    pub fn search_exact(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        self.check_query(query)?;
        let mut ranked = self.rank_all(query.values());
        ranked.truncate(k);
        Ok(ranked.into_iter().map(|(p, s)| self.hit(p, s)).collect())
    }

    /// Approximate top-k through the small-world graph. Indexes no larger
    /// than the search beam are scanned exhaustively.
    pub fn search_ann(
        &self,
        query: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        self.check_query(query)?;
        Ok(self
            .ann_candidates(query.values(), k)
            .into_iter()
            .map(|(p, s)| self.hit(p, s))
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let path = path.as_ref();
        let bytes = self.to_bytes();
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let bytes = fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(64 + self.vectors.len() * 4);
        w.extend_from_slice(&INDEX_MAGIC);
        put_u32(&mut w, INDEX_VERSION);
        put_u32(&mut w, self.dim as u32);
        put_u64(&mut w, self.sentences.len() as u64);
        put_u32(&mut w, self.documents.len() as u32);
        put_u32(&mut w, self.paragraphs.len() as u32);
        let p = self.graph.params;
        put_u32(&mut w, p.m as u32);
        put_u32(&mut w, p.ef_construction as u32);
        put_u32(&mut w, p.ef_search as u32);
        put_u64(&mut w, p.seed);

        for d in &self.documents {
            put_u32(&mut w, d.doc_id.0);
            w.push(d.kind.code());
            put_str(&mut w, &d.title);
            put_str(&mut w, &d.source_path);
        }
        for para in &self.paragraphs {
            put_u32(&mut w, para.para_id.0);
            put_u32(&mut w, para.doc_id.0);
            put_str(&mut w, &para.text);
            put_u32(&mut w, para.sentence_ids.len() as u32);
            for s in &para.sentence_ids {
                put_u32(&mut w, s.0);
            }
        }
        for (i, s) in self.sentences.iter().enumerate() {
            put_u32(&mut w, s.sent_id.0);
            put_u32(&mut w, s.para_id.0);
            put_str(&mut w, &s.text);
            for v in self.embedding(i) {
                w.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut w, self.graph.entry.unwrap_or(NO_ENTRY));
        for levels in &self.graph.links {
            w.push(levels.len() as u8);
            for list in levels {
                put_u32(&mut w, list.len() as u32);
                for n in list {
                    put_u32(&mut w, *n);
                }
            }
        }
        let digest = Sha256::digest(&w);
        w.extend_from_slice(&digest);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        if bytes.len() < INDEX_MAGIC.len() || bytes[..8] != INDEX_MAGIC {
            return Err(IndexError::BadMagic);
        }
        if bytes.len() < 8 + 4 + 32 {
            return Err(IndexError::Format("truncated header".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(IndexError::UnsupportedVersion(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(IndexError::Checksum);
        }
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let doc_count = r.u32()? as usize;
        let para_count = r.u32()? as usize;
        let params = HnswParams {
            m: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            seed: r.u64()?,
        };

        let mut documents = Vec::with_capacity(doc_count.min(1 << 16));
        for _ in 0..doc_count {
            let doc_id = DocId(r.u32()?);
            let code = r.u8()?;
            let kind = DocKind::from_code(code)
                .ok_or_else(|| IndexError::Format(format!("unknown document kind {code}")))?;
            documents.push(DocumentRecord {
                doc_id,
                kind,
                title: r.string()?,
                source_path: r.string()?,
            });
        }
        let mut paragraphs = Vec::with_capacity(para_count.min(1 << 20));
        for _ in 0..para_count {
            let para_id = ParaId(r.u32()?);
            let doc_id = DocId(r.u32()?);
            let text = r.string()?;
            let n = r.u32()? as usize;
            let mut sentence_ids = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                sentence_ids.push(SentId(r.u32()?));
            }
            paragraphs.push(Paragraph {
                para_id,
                doc_id,
                text,
                sentence_ids,
            });
        }
        let mut para_pos = HashMap::with_capacity(paragraphs.len());
        for (i, p) in paragraphs.iter().enumerate() {
            if para_pos.insert(p.para_id, i).is_some() {
                return Err(IndexError::DuplicateId(p.para_id.to_string()));
            }
        }
        let mut sentences = Vec::with_capacity(count.min(1 << 24));
        let mut vectors = Vec::with_capacity(count.saturating_mul(dim).min(1 << 28));
        for _ in 0..count {
            let sent_id = SentId(r.u32()?);
            let para_id = ParaId(r.u32()?);
            let text = r.string()?;
            for _ in 0..dim {
                vectors.push(f32::from_le_bytes(r.array::<4>()?));
            }
            sentences.push(SentenceMeta {
                sent_id,
                para_id,
                text,
            });
        }
        let entry = match r.u32()? {
            NO_ENTRY => None,
            e if (e as usize) < count => Some(e),
            e => return Err(IndexError::Format(format!("graph entry {e} out of range"))),
        };
        let mut links = Vec::with_capacity(count.min(1 << 24));
        for _ in 0..count {
            let levels = r.u8()? as usize;
            let mut per_level = Vec::with_capacity(levels);
            for _ in 0..levels {
                let n = r.u32()? as usize;
                let mut list = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    let node = r.u32()?;
                    if node as usize >= count {
                        return Err(IndexError::Format(format!("graph link {node} out of range")));
                    }
                    list.push(node);
                }
                per_level.push(list);
            }
            links.push(per_level);
        }
        if r.pos != body.len() {
            return Err(IndexError::Format("trailing bytes after graph".into()));
        }
        Ok(VectorIndex {
            dim,
            documents,
            paragraphs,
            para_pos,
            sentences,
            vectors,
            graph: HnswGraph {
                params,
                entry,
                links,
            },
        })
    }
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len() as u32);
    w.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| IndexError::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], IndexError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    fn u8(&mut self) -> Result<u8, IndexError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|e| IndexError::Format(e.to_string()))
    }
}
