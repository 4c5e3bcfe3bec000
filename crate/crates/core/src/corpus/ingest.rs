use std::fs;
use std::path::{Path, PathBuf};

use super::{
    split_paragraphs, split_sentences, DocId, DocKind, DocumentRecord, EmbedError, Embedder,
    HnswParams, IndexError, ParaId, Paragraph, SentId, SentenceRecord, VectorIndex,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("embedding sentence from {path}: {source}")]
    Embed { path: String, source: EmbedError },
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// One corpus document before chunking.
#[derive(Debug, Clone)]
pub struct SourceDocument {
    pub title: String,
    pub source_path: String,
    pub kind: DocKind,
    pub text: String,
}

impl SourceDocument {
    /// A leading `# Title` line becomes the title; otherwise the file stem.
    pub fn from_file(path: &Path, kind: DocKind, raw: &str) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().replace(['_', '-'], " "))
            .unwrap_or_else(|| "untitled".into());
        let mut text = raw;
        let mut title = stem;
        if let Some(first) = raw.lines().next() {
            if let Some(t) = first.strip_prefix("# ") {
                if !t.trim().is_empty() {
                    title = t.trim().to_string();
                    text = &raw[first.len()..];
                }
            }
        }
        SourceDocument {
            title,
            source_path: path.display().to_string(),
            kind,
            text: text.to_string(),
        }
    }
}

/// Walks `dir` (sorted, recursive) for `.txt`/`.md` files and indexes them.
/// A file under a directory named after a [`DocKind`] takes that kind.
pub fn ingest_corpus(
    dir: &Path,
    embedder: &dyn Embedder,
    params: HnswParams,
) -> Result<VectorIndex, IngestError> {
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for path in files {
        let raw = fs::read_to_string(&path).map_err(|source| IngestError::Read {
            path: path.clone(),
            source,
        })?;
        let kind = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|n| DocKind::parse(&n.to_string_lossy()))
            .unwrap_or(DocKind::EcoArtText);
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let mut doc = SourceDocument::from_file(&path, kind, &raw);
        doc.source_path = rel.display().to_string();
        docs.push(doc);
    }
    ingest_documents(docs, embedder, params)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), IngestError> {
    let entries = fs::read_dir(dir).map_err(|source| IngestError::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| IngestError::Read {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("txt") | Some("md")
        ) {
            out.push(path);
        }
    }
    Ok(())
}

/// Chunks, embeds and indexes in-memory documents. Ids are assigned
/// sequentially in document order.
pub fn ingest_documents(
    docs: Vec<SourceDocument>,
    embedder: &dyn Embedder,
    params: HnswParams,
) -> Result<VectorIndex, IngestError> {
    let mut documents = Vec::new();
    let mut paragraphs = Vec::new();
    let mut sentences = Vec::new();
    let mut next_para = 0u32;
    let mut next_sent = 0u32;

    for (d, doc) in docs.into_iter().enumerate() {
        let doc_id = DocId(d as u32);
        for para_text in split_paragraphs(&doc.text) {
            let para_id = ParaId(next_para);
            next_para += 1;
            let mut sentence_ids = Vec::new();
            for sentence in split_sentences(&para_text) {
                let embedding = embedder.embed(&sentence).map_err(|source| IngestError::Embed {
                    path: doc.source_path.clone(),
                    source,
                })?;
                let sent_id = SentId(next_sent);
                next_sent += 1;
                sentence_ids.push(sent_id);
                sentences.push(SentenceRecord {
                    sent_id,
                    para_id,
                    text: sentence,
                    embedding,
                });
            }
            paragraphs.push(Paragraph {
                para_id,
                doc_id,
                text: para_text,
                sentence_ids,
            });
        }
        documents.push(DocumentRecord {
            doc_id,
            title: doc.title,
            source_path: doc.source_path,
            kind: doc.kind,
        });
    }
    Ok(VectorIndex::build(
        embedder.dimension(),
        documents,
        paragraphs,
        sentences,
        params,
    )?)
}
