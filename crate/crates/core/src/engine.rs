//! The live engine: owns the memory state, runs maintenance on window
//! closes, and answers queries against arrival-time snapshots.
//!
//! Maintenance (summarize → insert leaf → merge until bounded) is the
//! only path that mutates the tiers and forest; queries read a cloned
//! snapshot and write back exactly one QA fold after the final answer.

use crate::backend::{Backend, BackendError};
use crate::config::{ConfigError, EngineConfig};
use crate::forest::{EventForest, ForestError};
use crate::frame::FrameRef;
use crate::modes::RunMode;
use crate::orchestrator::{run_query, FoldRequest, QueryInput, QueryReport};
use crate::qa::{QAStore, QaError};
use crate::tiers::{TierError, TierStore, WindowBatch};
use crate::time::Timestamp;
use crate::tokens::truncate_to_tokens;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tier(#[from] TierError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// The complete queryable memory. Cloning it yields the immutable
/// snapshot a query runs against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryState {
    pub tiers: TierStore,
    pub forest: EventForest,
    pub qa: QAStore,
    /// Whole-stream frame history; populated only by the full-context
    /// baseline, which has no bounded memory by definition.
    pub history: Vec<FrameRef>,
}

impl MemoryState {
    pub fn new(cfg: &EngineConfig) -> Self {
        MemoryState {
            tiers: TierStore::new(),
            forest: EventForest::new(cfg.n_f, cfg.n_r, cfg.embed_dim),
            qa: QAStore::new(),
            history: Vec::new(),
        }
    }
}

pub struct Engine {
    cfg: EngineConfig,
    mode: RunMode,
    backend: Arc<dyn Backend>,
    state: MemoryState,
    windows_flushed: u64,
}

impl Engine {
    pub fn new(
        cfg: EngineConfig,
        mode: RunMode,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, EngineError> {
        let cfg = cfg.validate()?;
        let state = MemoryState::new(&cfg);
        Ok(Engine {
            cfg,
            mode,
            backend,
            state,
            windows_flushed: 0,
        })
    }

    /// Rehydrate an engine from a loaded snapshot.
    pub fn from_state(
        cfg: EngineConfig,
        mode: RunMode,
        backend: Arc<dyn Backend>,
        mut state: MemoryState,
    ) -> Result<Self, EngineError> {
        let cfg = cfg.validate()?;
        state.forest.rebuild_parents();
        let windows_flushed = state.forest.nodes().filter(|n| n.is_leaf()).count() as u64;
        Ok(Engine {
            cfg,
            mode,
            backend,
            state,
            windows_flushed,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    pub fn state(&self) -> &MemoryState {
        &self.state
    }

    pub fn windows_flushed(&self) -> u64 {
        self.windows_flushed
    }

    /// Immutable snapshot for query-time reads.
    pub fn snapshot(&self) -> MemoryState {
        self.state.clone()
    }

    /// Ingest one frame; closes and summarizes any window the frame's
    /// timestamp completes.
    pub fn push_frame(&mut self, frame: FrameRef) -> Result<(), EngineError> {
        if self.mode == RunMode::FullContext {
            self.state.history.push(frame.clone());
        }
        let batches = self.state.tiers.push_frame(frame, &self.cfg)?;
        for batch in batches {
            self.absorb_window(&batch)?;
        }
        Ok(())
    }

    /// Flush the final partial window at stream end.
    pub fn close_stream(&mut self, end: Timestamp) -> Result<(), EngineError> {
        if let Some(batch) = self.state.tiers.close(end, &self.cfg) {
            self.absorb_window(&batch)?;
        }
        Ok(())
    }

    fn absorb_window(&mut self, batch: &WindowBatch) -> Result<(), EngineError> {
        if !self.mode.uses_forest() {
            self.windows_flushed += 1;
            return Ok(());
        }
        let raw = self
            .backend
            .summarize_window(&batch.keyframes, batch.interval)?;
        let summary = truncate_to_tokens(&raw, self.cfg.summary_token_cap);
        let embedding = self.backend.embed(&summary)?;
        if self.mode.enforces_root_bound() {
            let backend = Arc::clone(&self.backend);
            let cap = self.cfg.summary_token_cap;
            self.state.forest.insert_leaf::<EngineError, _>(
                batch,
                summary,
                embedding,
                self.cfg.lambda,
                |a, b| {
                    let merged = backend.merge_summaries(&a.summary, &b.summary)?;
                    let merged = truncate_to_tokens(&merged, cap);
                    let emb = backend.embed(&merged)?;
                    Ok((merged, emb))
                },
            )?;
        } else {
            self.state.forest.append_leaf(batch, summary, embedding)?;
        }
        self.windows_flushed += 1;
        Ok(())
    }

    /// Answer one query: snapshot at arrival, run the two-phase policy,
    /// then apply the single QA fold. Backend failures abort the query
    /// without touching memory.
    pub fn answer_query(
        &mut self,
        question: &str,
        directive: Option<&str>,
        now: Timestamp,
    ) -> Result<QueryReport, EngineError> {
        let arrival = Instant::now();
        let snapshot = self.snapshot();
        let input = QueryInput {
            question,
            directive,
            now,
        };
        let (report, fold) = run_query(
            &snapshot,
            &self.cfg,
            self.mode,
            self.backend.as_ref(),
            input,
            arrival,
        )?;
        self.apply_fold(&fold)?;
        Ok(report)
    }

    /// Apply a query's deferred QA fold. Folds are serialized in query
    /// order by the caller.
    pub fn apply_fold(&mut self, fold: &FoldRequest) -> Result<(), EngineError> {
        self.state.qa.fold_qa(
            &fold.question,
            &fold.answer,
            fold.at,
            self.backend.as_ref(),
            self.cfg.summary_token_cap,
            self.cfg.embed_dim,
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::orchestrator::Phase;

    fn small_cfg() -> EngineConfig {
        EngineConfig {
            embed_dim: 32,
            n_f: 4,
            ..EngineConfig::default()
        }
    }

    fn mk(mode: RunMode) -> Engine {
        let cfg = small_cfg();
        let backend = Arc::new(MockBackend::new(cfg.embed_dim));
        Engine::new(cfg, mode, backend).unwrap()
    }

    fn feed(engine: &mut Engine, seconds: f64, fps: f64) {
        let n = (seconds * fps) as u64;
        for i in 0..n {
            let ts = Timestamp::from_secs(i as f64 / fps);
            engine
                .push_frame(FrameRef::new(ts, format!("cap {i}"), i))
                .unwrap();
        }
    }

    #[test]
    fn windows_become_leaves_on_cadence() {
        let mut e = mk(RunMode::Oasis);
        feed(&mut e, 100.0, 2.0);
        // 100 s at a 32 s cadence closes three windows.
        assert_eq!(e.windows_flushed(), 3);
        assert_eq!(e.state().forest.root_count(), 3);
        e.close_stream(Timestamp::from_secs(100.0)).unwrap();
        assert_eq!(e.windows_flushed(), 4);
    }

    #[test]
    fn cold_engine_answers_a_query() {
        let mut e = mk(RunMode::Oasis);
        let report = e
            .answer_query("anyone here? !answer:nobody", None, Timestamp::ZERO)
            .unwrap();
        assert_eq!(report.answer, "nobody");
        assert_eq!(report.phase, Phase::CoarseOnly);
        assert_eq!(e.state().qa.len(), 1);
    }

    #[test]
    fn tool_query_runs_one_fine_round() {
        let mut e = mk(RunMode::Oasis);
        feed(&mut e, 200.0, 2.0);
        e.answer_query("seed", Some("!answer:ok"), Timestamp::from_secs(99.0))
            .unwrap();
        let report = e
            .answer_query(
                "where was it",
                Some("!tool:cap 12!answer:back there"),
                Timestamp::from_secs(100.0),
            )
            .unwrap();
        assert_eq!(report.phase, Phase::Fine);
        assert_eq!(report.answer, "back there");
        assert_eq!(report.intent.as_deref(), Some("cap 12"));
        assert!(!report.retrieved.is_empty() && report.retrieved.len() <= 2);
        assert!(report.fine_budget.is_some());
        assert_eq!(e.state().qa.len(), 2);
    }

    #[test]
    fn flatten_mode_grows_roots_without_bound() {
        let mut e = mk(RunMode::FlattenMemory);
        feed(&mut e, 32.0 * 9.0, 2.0);
        assert_eq!(e.state().forest.root_count(), 8);
        assert!(e.state().forest.root_count() > e.config().n_r);
    }

    #[test]
    fn full_context_mode_skips_the_forest_and_keeps_history() {
        let mut e = mk(RunMode::FullContext);
        feed(&mut e, 100.0, 2.0);
        assert_eq!(e.state().forest.node_count(), 0);
        assert_eq!(e.state().history.len(), 200);
        let report = e
            .answer_query("what now !answer:fine", None, Timestamp::from_secs(99.5))
            .unwrap();
        // 99.5 s of history at 0.5 fps, anchored at the newest frame.
        assert_eq!(report.coarse_budget.frame_tokens, 50 * 256);
        assert_eq!(report.phase, Phase::CoarseOnly);
    }

    #[test]
    fn no_rag_mode_never_retrieves() {
        let mut e = mk(RunMode::NoRag);
        feed(&mut e, 200.0, 2.0);
        let report = e
            .answer_query("was there", Some("!tool:cap 3"), Timestamp::from_secs(100.0))
            .unwrap();
        assert_eq!(report.phase, Phase::CoarseOnly);
        assert!(report.retrieved.is_empty());
        assert!(report.fine_budget.is_none());
        assert!(report.answer.contains("tool_call"));
    }

    #[test]
    fn snapshot_queries_ignore_later_ingestion() {
        let mut e = mk(RunMode::Oasis);
        feed(&mut e, 200.0, 2.0);
        let snap = e.snapshot();
        let before = run_query(
            &snap,
            e.config(),
            RunMode::Oasis,
            &MockBackend::new(32),
            QueryInput {
                question: "probe",
                directive: Some("!tool:cap 40"),
                now: Timestamp::from_secs(100.0),
            },
            Instant::now(),
        )
        .unwrap()
        .0;
        // Heavy mutation after the snapshot was taken.
        for i in 0..400u64 {
            e.push_frame(FrameRef::new(
                Timestamp::from_secs(200.0 + i as f64 * 0.5),
                format!("late {i}"),
                1000 + i,
            ))
            .unwrap();
        }
        let after = run_query(
            &snap,
            e.config(),
            RunMode::Oasis,
            &MockBackend::new(32),
            QueryInput {
                question: "probe",
                directive: Some("!tool:cap 40"),
                now: Timestamp::from_secs(100.0),
            },
            Instant::now(),
        )
        .unwrap()
        .0;
        assert_eq!(before.retrieved, after.retrieved);
        assert_eq!(before.answer, after.answer);
        assert_eq!(before.coarse_budget, after.coarse_budget);
    }
}
