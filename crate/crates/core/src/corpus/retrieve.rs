use std::collections::HashSet;

use super::{EmbedError, Embedder, IndexError, RetrievalConfig, RetrievalHit, VectorIndex};

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Embeds `query_text` and returns the best sentence from each of the
/// first `cfg.k` distinct paragraphs in the similarity ranking.
pub fn retrieve(
    index: &VectorIndex,
    embedder: &dyn Embedder,
    query_text: &str,
    cfg: &RetrievalConfig,
) -> Result<Vec<RetrievalHit>, RetrieveError> {
    if index.is_empty() || cfg.k == 0 {
        return Ok(Vec::new());
    }
    let query = embedder.embed(query_text)?;
    if query.dimension() != index.dimension() {
        return Err(IndexError::Dimension {
            expected: index.dimension(),
            actual: query.dimension(),
        }
        .into());
    }

    let ranked = if cfg.ann_enabled {
        // Widen the beam until k distinct paragraphs show up or the whole
        // index has been returned.
        let mut want = (cfg.k * 8).max(16);
        loop {
            let cands = index.ann_candidates(query.values(), want);
            if distinct_paragraphs(index, &cands) >= cfg.k || want >= index.len() {
                break cands;
            }
            want = (want * 4).min(index.len());
        }
    } else {
        index.rank_all(query.values())
    };

    let mut seen = HashSet::new();
    let mut hits = Vec::with_capacity(cfg.k);
    for (pos, score) in ranked {
        if seen.insert(index.para_of(pos)) {
            hits.push(index.hit(pos, score));
            if hits.len() == cfg.k {
                break;
            }
        }
    }
    Ok(hits)
}

fn distinct_paragraphs(index: &VectorIndex, cands: &[(usize, f32)]) -> usize {
    cands
        .iter()
        .map(|(p, _)| index.para_of(*p))
        .collect::<HashSet<_>>()
        .len()
}
