//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Similarity is the dot product, so "closer" means a larger score.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};


const MAX_LEVEL: usize = 16;
const LANES: usize = 8;

/// Dot product over eight interleaved partial sums. Rounds differently from
/// the sequential form but vectorizes; only used to steer the graph.
#[inline]
fn lane_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; LANES];
    let (ac, ar) = a.split_at(a.len() - a.len() % LANES);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(LANES).zip(bc.chunks_exact(LANES)) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    let mut tail = 0f32;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    acc.iter().sum::<f32>() + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswParams {
    /// Neighbor degree on upper layers; layer 0 keeps twice as many.
    pub m: usize,
    pub ef_construction: usize,
    /// Beam width at query time (raised to `k` when `k` is larger).
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 32,
            ef_construction: 200,
            ef_search: 256,
            seed: 0x5eed_0cea,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f32,
    node: u32,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HnswGraph {
    pub(crate) params: HnswParams,
    pub(crate) entry: Option<u32>,
    /// `links[node][level]` lists neighbors of `node` on `level`.
    pub(crate) links: Vec<Vec<Vec<u32>>>,
}

struct Vectors<'a> {
    data: &'a [f32],
    dim: usize,
}

impl Vectors<'_> {
    #[inline]
    fn get(&self, node: u32) -> &[f32] {
        let start = node as usize * self.dim;
        &self.data[start..start + self.dim]
    }
}

impl HnswGraph {
    pub(crate) fn build(data: &[f32], dim: usize, params: HnswParams) -> Self {
        let count = data.len().checked_div(dim).unwrap_or(0);
        let mut graph = HnswGraph {
            params,
            entry: None,
            links: Vec::with_capacity(count),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let vectors = Vectors { data, dim };
        for node in 0..count as u32 {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            let level = ((-u.ln() * ml).floor() as usize).min(MAX_LEVEL);
            graph.insert(&vectors, node, level);
        }
        graph
    }

    fn top_level(&self) -> usize {
        self.entry
            .map_or(0, |e| self.links[e as usize].len().saturating_sub(1))
    }

    fn capacity(&self, level: usize) -> usize {
        if level == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, vectors: &Vectors<'_>, node: u32, level: usize) {
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(entry) = self.entry else {
            self.entry = Some(node);
            return;
        };
        let query = vectors.get(node);
        let top = self.top_level();
        let mut nearest = Scored {
            sim: lane_dot(query, vectors.get(entry)),
            node: entry,
        };
        for l in (level + 1..=top).rev() {
            nearest = self.greedy(vectors, query, nearest, l);
        }
        let mut entry_points = vec![nearest];
        for l in (0..=level.min(top)).rev() {
            let candidates =
                self.search_layer(vectors, query, &entry_points, self.params.ef_construction, l);
            let selected = select_neighbors(vectors, &candidates, self.capacity(l).min(self.params.m));
            self.links[node as usize][l] = selected.iter().map(|s| s.node).collect();
            for s in &selected {
                self.connect(vectors, s.node, node, l);
            }
            entry_points = candidates;
        }
        if level > top {
            self.entry = Some(node);
        }
    }

    fn connect(&mut self, vectors: &Vectors<'_>, from: u32, to: u32, level: usize) {
        let cap = self.capacity(level);
        let list = &mut self.links[from as usize][level];
        list.push(to);
        if list.len() <= cap {
            return;
        }
        let base = vectors.get(from);
        let mut scored: Vec<Scored> = list
            .iter()
            .map(|&n| Scored {
                sim: lane_dot(base, vectors.get(n)),
                node: n,
            })
            .collect();
        scored.sort_by(|a, b| b.cmp(a));
        let kept = select_neighbors(vectors, &scored, cap);
        *list = kept.into_iter().map(|s| s.node).collect();
    }

    fn greedy(&self, vectors: &Vectors<'_>, query: &[f32], start: Scored, level: usize) -> Scored {
        let mut best = start;
        loop {
            let mut improved = false;
            for &n in &self.links[best.node as usize][level] {
                let cand = Scored {
                    sim: lane_dot(query, vectors.get(n)),
                    node: n,
                };
                if cand > best {
                    best = cand;
                    improved = true;
                }
            }
            if !improved {
                return best;
            }
        }
    }

    /// Beam search on one layer; returns up to `ef` nodes, best first.
    fn search_layer(
        &self,
        vectors: &Vectors<'_>,
        query: &[f32],
        entry_points: &[Scored],
        ef: usize,
        level: usize,
    ) -> Vec<Scored> {
        let mut visited = vec![false; self.links.len()];
        let mut candidates: BinaryHeap<Scored> = BinaryHeap::new();
        let mut results: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();
        for &ep in entry_points {
            if !visited[ep.node as usize] {
                visited[ep.node as usize] = true;
                candidates.push(ep);
                results.push(Reverse(ep));
            }
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some(current) = candidates.pop() {
            let worst = results.peek().map(|r| r.0);
            if let Some(worst) = worst {
                if results.len() >= ef && current < worst {
                    break;
                }
            }
            let Some(neighbors) = self.links[current.node as usize].get(level) else {
                continue;
            };
            for &n in neighbors {
                if visited[n as usize] {
                    continue;
                }
                visited[n as usize] = true;
                let cand = Scored {
                    sim: lane_dot(query, vectors.get(n)),
                    node: n,
                };
                let admit = results.len() < ef || results.peek().is_some_and(|w| cand > w.0);
                if admit {
                    candidates.push(cand);
                    results.push(Reverse(cand));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        let mut out: Vec<Scored> = results.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out
    }

    /// Returns `(node, similarity)` pairs for the best `ef` candidates found.
    pub(crate) fn search(
        &self,
        data: &[f32],
        dim: usize,
        query: &[f32],
        ef: usize,
    ) -> Vec<(u32, f32)> {
        let Some(entry) = self.entry else {
            return Vec::new();
        };
        let vectors = Vectors { data, dim };
        let mut nearest = Scored {
            sim: lane_dot(query, vectors.get(entry)),
            node: entry,
        };
        for l in (1..=self.top_level()).rev() {
            nearest = self.greedy(&vectors, query, nearest, l);
        }
        self.search_layer(&vectors, query, &[nearest], ef, 0)
            .into_iter()
            .map(|s| (s.node, s.sim))
            .collect()
    }
}

/// Diversity heuristic: keep a candidate only if it is closer to the base
/// than to every neighbor already kept, then top up with the pruned ones.
fn select_neighbors(vectors: &Vectors<'_>, sorted: &[Scored], m: usize) -> Vec<Scored> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    let mut pruned: Vec<Scored> = Vec::new();
    for &cand in sorted {
        if kept.len() >= m {
            break;
        }
        let cv = vectors.get(cand.node);
        let diverse = kept
            .iter()
            .all(|k| lane_dot(cv, vectors.get(k.node)) < cand.sim);
        if diverse {
            kept.push(cand);
        } else {
            pruned.push(cand);
        }
    }
    for p in pruned {
        if kept.len() >= m {
            break;
        }
        kept.push(p);
    }
    kept
}
