//! The bounded multi-resolution event hierarchy.
//!
//! Leaves are created from closed ingest windows; whenever the root set
//! grows past `n_r`, the temporally adjacent root pair with the highest
//! merge score is fused into a parent until the bound holds again. The
//! merge score balances semantic coherence against over-abstraction:
//!
//! ```text
//! score(a, b) = cos(e_a, e_b) − λ·(level_a + level_b)
//! ```
//!
//! Retrieval greedily picks the highest-cosine node over the whole
//! forest, pruning each pick's ancestors and descendants from the
//! candidate pool so the result set is lineage-free.
//!
//! The forest never calls a model itself: merged summaries and
//! embeddings are supplied by the caller through a merge callback,
//! keeping this module pure and deterministic.

use crate::frame::FrameRef;
use crate::similarity::cosine;
use crate::tiers::{uniform_sample, WindowBatch};
use crate::time::{TimeInterval, Timestamp};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

const TS_EPS: f64 = 1e-9;

pub type NodeId = u64;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("non-contiguous window: starts at {got} but flushed range ends at {expected}")]
    NonContiguousWindow { expected: Timestamp, got: Timestamp },
    #[error("embedding dim mismatch: expected {expected}, got {got}")]
    EmbeddingDimMismatch { expected: usize, got: usize },
    #[error("too few roots to merge")]
    TooFewRoots,
    #[error("root index {0} out of range")]
    IndexOutOfRange(usize),
}

/// One event: a time interval, its sampled keyframes, a text summary
/// with its embedding, and the node's height in the merge hierarchy.
/// Leaves have level 0 and no children; internal nodes have exactly two
/// temporally adjacent children whose union is the node's interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventNode {
    pub id: NodeId,
    pub interval: TimeInterval,
    pub keyframes: Vec<FrameRef>,
    pub summary: String,
    pub embedding: Vec<f32>,
    pub level: u32,
    pub children: Option<(NodeId, NodeId)>,
}

impl EventNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Root-ordered forest of [`EventNode`]s. Nodes are immutable once
/// created; merges only add parents and rewrite the root list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventForest {
    n_f: usize,
    n_r: usize,
    embed_dim: usize,
    next_id: NodeId,
    nodes: BTreeMap<NodeId, EventNode>,
    roots: Vec<NodeId>,
    #[serde(skip)]
    parent: BTreeMap<NodeId, NodeId>,
}

/// Eq.-style merge score: embedding cosine minus a level penalty.
pub fn merge_score(a: &EventNode, b: &EventNode, lambda: f64) -> f64 {
    cosine(&a.embedding, &b.embedding) - lambda * (a.level as f64 + b.level as f64)
}

impl EventForest {
    pub fn new(n_f: usize, n_r: usize, embed_dim: usize) -> Self {
        EventForest {
            n_f,
            n_r,
            embed_dim,
            next_id: 0,
            nodes: BTreeMap::new(),
            roots: Vec::new(),
            parent: BTreeMap::new(),
        }
    }

    pub fn root_cap(&self) -> usize {
        self.n_r
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn get(&self, id: NodeId) -> Option<&EventNode> {
        self.nodes.get(&id)
    }

    pub fn parent_of(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    /// All nodes in creation order.
    pub fn nodes(&self) -> impl Iterator<Item = &EventNode> {
        self.nodes.values()
    }

    /// Current roots in temporal order.
    pub fn roots(&self) -> impl Iterator<Item = &EventNode> {
        self.roots.iter().map(|id| &self.nodes[id])
    }

    pub fn root_ids(&self) -> &[NodeId] {
        &self.roots
    }

    /// End of the summarized stream range (start of the next window).
    pub fn flushed_end(&self) -> Timestamp {
        self.roots
            .last()
            .map(|id| self.nodes[id].interval.end)
            .unwrap_or(Timestamp::ZERO)
    }

    /// Append a level-0 leaf without enforcing the root bound. Used by
    /// the flatten-memory mode, where roots grow without limit.
    pub fn append_leaf(
        &mut self,
        batch: &WindowBatch,
        summary: String,
        embedding: Vec<f32>,
    ) -> Result<NodeId, ForestError> {
        if embedding.len() != self.embed_dim {
            return Err(ForestError::EmbeddingDimMismatch {
                expected: self.embed_dim,
                got: embedding.len(),
            });
        }
        let expected = self.flushed_end();
        if (batch.interval.start.as_secs() - expected.as_secs()).abs() > TS_EPS {
            return Err(ForestError::NonContiguousWindow {
                expected,
                got: batch.interval.start,
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        self.nodes.insert(
            id,
            EventNode {
                id,
                interval: batch.interval,
                keyframes: uniform_sample(&batch.keyframes, self.n_f),
                summary,
                embedding,
                level: 0,
                children: None,
            },
        );
        self.roots.push(id);
        Ok(id)
    }

    /// Append a leaf and re-establish the root bound, fusing adjacent
    /// root pairs by descending merge score. `merge` supplies the fused
    /// summary and embedding for a pair (a model call in production).
    pub fn insert_leaf<E, F>(
        &mut self,
        batch: &WindowBatch,
        summary: String,
        embedding: Vec<f32>,
        lambda: f64,
        merge: F,
    ) -> Result<NodeId, E>
    where
        E: From<ForestError>,
        F: FnMut(&EventNode, &EventNode) -> Result<(String, Vec<f32>), E>,
    {
        let id = self.append_leaf(batch, summary, embedding)?;
        self.enforce_root_bound(lambda, merge)?;
        Ok(id)
    }

    /// The adjacent root pair `(i, i+1)` maximizing the merge score;
    /// ties go to the earliest pair.
    pub fn select_merge_pair(&self, lambda: f64) -> Result<usize, ForestError> {
        if self.roots.len() < 2 {
            return Err(ForestError::TooFewRoots);
        }
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.roots.len() - 1 {
            let score = merge_score(
                &self.nodes[&self.roots[i]],
                &self.nodes[&self.roots[i + 1]],
                lambda,
            );
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        Ok(best)
    }

    /// Fuse roots `i` and `i+1` into a parent carrying the supplied
    /// summary and embedding. The parent spans the pair's union, keeps
    /// `n_f` keyframes uniformly sampled from the concatenated child
    /// keyframes, and sits one level above the taller child.
    pub fn merge_at(
        &mut self,
        i: usize,
        merged_summary: String,
        merged_embedding: Vec<f32>,
    ) -> Result<NodeId, ForestError> {
        if i + 1 >= self.roots.len() {
            return Err(ForestError::IndexOutOfRange(i));
        }
        if merged_embedding.len() != self.embed_dim {
            return Err(ForestError::EmbeddingDimMismatch {
                expected: self.embed_dim,
                got: merged_embedding.len(),
            });
        }
        let (left_id, right_id) = (self.roots[i], self.roots[i + 1]);
        let (left, right) = (&self.nodes[&left_id], &self.nodes[&right_id]);
        let mut pool = left.keyframes.clone();
        pool.extend(right.keyframes.iter().cloned());
        let node = EventNode {
            id: self.next_id,
            interval: TimeInterval::new(left.interval.start, right.interval.end),
            keyframes: uniform_sample(&pool, self.n_f),
            summary: merged_summary,
            embedding: merged_embedding,
            level: left.level.max(right.level) + 1,
            children: Some((left_id, right_id)),
        };
        let id = node.id;
        self.next_id += 1;
        self.nodes.insert(id, node);
        self.parent.insert(left_id, id);
        self.parent.insert(right_id, id);
        self.roots.splice(i..=i + 1, [id]);
        Ok(id)
    }

    /// Merge highest-scoring adjacent root pairs until `|roots| <= n_r`.
    /// Returns the number of merges performed. Each merge shrinks the
    /// root set by one, so this always terminates.
    pub fn enforce_root_bound<E, F>(&mut self, lambda: f64, mut merge: F) -> Result<usize, E>
    where
        E: From<ForestError>,
        F: FnMut(&EventNode, &EventNode) -> Result<(String, Vec<f32>), E>,
    {
        let mut merges = 0;
        while self.roots.len() > self.n_r {
            let i = self.select_merge_pair(lambda).map_err(E::from)?;
            let (summary, embedding) = {
                let a = &self.nodes[&self.roots[i]];
                let b = &self.nodes[&self.roots[i + 1]];
                merge(a, b)?
            };
            self.merge_at(i, summary, embedding).map_err(E::from)?;
            merges += 1;
        }
        Ok(merges)
    }

    /// Ancestor chain of `id`, nearest first.
    pub fn ancestors(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cur = id;
        while let Some(&p) = self.parent.get(&cur) {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Every node in the subtree below `id` (excluding `id`).
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(cur) = stack.pop() {
            if let Some((a, b)) = self.nodes[&cur].children {
                out.push(a);
                out.push(b);
                stack.push(a);
                stack.push(b);
            }
        }
        out
    }

    /// Greedy lineage-pruned retrieval over *all* nodes: repeatedly take
    /// the remaining node with the highest cosine to the query (ties to
    /// the earliest-created node), then drop its ancestors and
    /// descendants from the pool. Yields up to `k` mutually
    /// lineage-free nodes.
    pub fn retrieve_pruned(&self, query: &[f32], k: usize) -> Vec<&EventNode> {
        let mut pool: BTreeSet<NodeId> = self.nodes.keys().copied().collect();
        let mut picked = Vec::new();
        while picked.len() < k && !pool.is_empty() {
            let mut best: Option<(NodeId, f64)> = None;
            for &id in &pool {
                let score = cosine(query, &self.nodes[&id].embedding);
                match best {
                    Some((_, s)) if score <= s => {}
                    _ => best = Some((id, score)),
                }
            }
            let (id, _) = best.expect("non-empty pool");
            pool.remove(&id);
            for a in self.ancestors(id) {
                pool.remove(&a);
            }
            for d in self.descendants(id) {
                pool.remove(&d);
            }
            picked.push(&self.nodes[&id]);
        }
        picked
    }

    /// `(interval, summary)` per root in temporal order — the bounded
    /// long-history digest fed to the coarse pass.
    pub fn root_summaries(&self) -> Vec<(TimeInterval, &str)> {
        self.roots
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                (n.interval, n.summary.as_str())
            })
            .collect()
    }

    /// Recompute the parent map from child links. Must be called after
    /// deserializing a forest; the map is derived state and not stored.
    pub fn rebuild_parents(&mut self) {
        self.parent.clear();
        for (id, node) in &self.nodes {
            if let Some((a, b)) = node.children {
                self.parent.insert(a, *id);
                self.parent.insert(b, *id);
            }
        }
    }
}
