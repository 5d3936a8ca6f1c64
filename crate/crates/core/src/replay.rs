//! Trace replay.
//!
//! Frames are pushed in order and every query is answered with only
//! prior events visible. Deterministic mode (the default) serializes
//! everything in trace order and zeroes wall-clock fields in the
//! report, so identical inputs produce byte-identical reports. Stress
//! mode answers each query on a worker thread against its arrival-time
//! snapshot while ingestion continues, joining before the next query so
//! QA folds stay serialized in query order.

use crate::backend::Backend;
use crate::config::EngineConfig;
use crate::engine::{Engine, EngineError};
use crate::modes::RunMode;
use crate::orchestrator::{run_query, FoldRequest, Phase, QueryInput, QueryReport};
use crate::time::{TimeInterval, Timestamp};
use crate::tokens::TokenBudget;
use crate::trace::{TraceError, TraceEvent};
use crate::frame::FrameRef;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("query worker panicked")]
    WorkerPanic,
}

/// One per-query report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub ts: f64,
    pub question: String,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<String>,
    pub retrieved_node_ids: Vec<u64>,
    pub coarse_budget: TokenBudget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine_budget: Option<TokenBudget>,
    pub rpd: f64,
    pub end_to_end: f64,
    pub answer: String,
    pub context_horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needle_hit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_expected: Option<bool>,
}

/// Final aggregate line, recomputable from the per-query records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub queries: usize,
    pub mean_coarse_total: f64,
    pub max_coarse_total: u64,
    pub mean_rpd: f64,
    pub max_rpd: f64,
    pub needle_queries: usize,
    pub needle_hits: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needle_recall: Option<f64>,
    pub matched_expected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine {
    Query(QueryRecord),
    Aggregate(AggregateRecord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub queries: Vec<QueryRecord>,
    pub aggregate: AggregateRecord,
}

impl RunReport {
    /// One line-delimited record per query plus a final aggregate line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for q in &self.queries {
            writeln!(
                out,
                "{}",
                serde_json::to_string(&ReportLine::Query(q.clone())).expect("record to json")
            )
            .unwrap();
        }
        writeln!(
            out,
            "{}",
            serde_json::to_string(&ReportLine::Aggregate(self.aggregate.clone()))
                .expect("aggregate to json")
        )
        .unwrap();
        out
    }
}

pub struct ReplayOutcome {
    pub report: RunReport,
    pub engine: Engine,
}

struct PendingQuery {
    handle: std::thread::JoinHandle<Result<(QueryReport, FoldRequest), EngineError>>,
    ts: f64,
    needle_window: Option<(f64, f64)>,
    expected: String,
}

/// Replay a parsed trace and produce the run report plus the final
/// engine state (for snapshotting).
pub fn run_trace(
    events: &[TraceEvent],
    cfg: EngineConfig,
    mode: RunMode,
    backend: Arc<dyn Backend>,
    deterministic: bool,
) -> Result<ReplayOutcome, ReplayError> {
    let mut engine = Engine::new(cfg.clone(), mode, Arc::clone(&backend))?;
    let mut records: Vec<QueryRecord> = Vec::new();
    let mut next_payload_id: u64 = 0;
    let mut pending: Option<PendingQuery> = None;

    for event in events {
        match event {
            TraceEvent::Frame { ts, caption } => {
                let frame = FrameRef::new(
                    Timestamp::from_secs(*ts),
                    caption.clone(),
                    next_payload_id,
                );
                next_payload_id += 1;
                engine.push_frame(frame)?;
            }
            TraceEvent::Query {
                ts,
                question,
                directive,
                expected,
                needle_window,
            } => {
                if let Some(p) = pending.take() {
                    finish_query(&mut engine, p, &mut records, deterministic)?;
                }
                let now = Timestamp::from_secs(*ts);
                let directive_opt = (!directive.is_empty()).then_some(directive.as_str());
                if deterministic {
                    let report = engine.answer_query(question, directive_opt, now)?;
                    records.push(to_record(
                        report,
                        *ts,
                        *needle_window,
                        expected,
                        deterministic,
                    ));
                } else {
                    let snapshot = engine.snapshot();
                    let cfg = cfg.clone();
                    let backend = Arc::clone(&backend);
                    let question = question.clone();
                    let directive = directive.clone();
                    let handle = std::thread::spawn(move || {
                        let arrival = Instant::now();
                        let directive_opt =
                            (!directive.is_empty()).then_some(directive.as_str());
                        run_query(
                            &snapshot,
                            &cfg,
                            mode,
                            backend.as_ref(),
                            QueryInput {
                                question: &question,
                                directive: directive_opt,
                                now,
                            },
                            arrival,
                        )
                    });
                    pending = Some(PendingQuery {
                        handle,
                        ts: *ts,
                        needle_window: *needle_window,
                        expected: expected.clone(),
                    });
                }
            }
            TraceEvent::Close { ts } => {
                if let Some(p) = pending.take() {
                    finish_query(&mut engine, p, &mut records, deterministic)?;
                }
                engine.close_stream(Timestamp::from_secs(*ts))?;
            }
        }
    }
    if let Some(p) = pending.take() {
        finish_query(&mut engine, p, &mut records, deterministic)?;
    }

    let aggregate = aggregate(&records);
    Ok(ReplayOutcome {
        report: RunReport {
            queries: records,
            aggregate,
        },
        engine,
    })
}

fn finish_query(
    engine: &mut Engine,
    pending: PendingQuery,
    records: &mut Vec<QueryRecord>,
    deterministic: bool,
) -> Result<(), ReplayError> {
    let (report, fold) = pending
        .handle
        .join()
        .map_err(|_| ReplayError::WorkerPanic)??;
    engine.apply_fold(&fold)?;
    records.push(to_record(
        report,
        pending.ts,
        pending.needle_window,
        &pending.expected,
        deterministic,
    ));
    Ok(())
}

fn to_record(
    report: QueryReport,
    ts: f64,
    needle_window: Option<(f64, f64)>,
    expected: &str,
    deterministic: bool,
) -> QueryRecord {
    let needle_hit = needle_window.map(|(start, end)| {
        let needle = TimeInterval::new(Timestamp::from_secs(start), Timestamp::from_secs(end));
        report.retrieved.iter().any(|(_, iv)| iv.overlaps(&needle))
    });
    let matched_expected = (!expected.is_empty()).then(|| report.answer == expected);
    QueryRecord {
        ts,
        question: report.question,
        phase: report.phase,
        intent: report.intent,
        retrieved_node_ids: report.retrieved.iter().map(|(id, _)| *id).collect(),
        coarse_budget: report.coarse_budget,
        fine_budget: report.fine_budget,
        rpd: if deterministic { 0.0 } else { report.rpd },
        end_to_end: if deterministic { 0.0 } else { report.end_to_end },
        answer: report.answer,
        context_horizon: report.context_horizon.as_secs(),
        needle_hit,
        matched_expected,
    }
}

fn aggregate(records: &[QueryRecord]) -> AggregateRecord {
    let n = records.len();
    let sum_coarse: u64 = records.iter().map(|r| r.coarse_budget.total).sum();
    let needle_queries = records.iter().filter(|r| r.needle_hit.is_some()).count();
    let needle_hits = records
        .iter()
        .filter(|r| r.needle_hit == Some(true))
        .count();
    AggregateRecord {
        queries: n,
        mean_coarse_total: if n == 0 {
            0.0
        } else {
            sum_coarse as f64 / n as f64
        },
        max_coarse_total: records.iter().map(|r| r.coarse_budget.total).max().unwrap_or(0),
        mean_rpd: if n == 0 {
            0.0
        } else {
            records.iter().map(|r| r.rpd).sum::<f64>() / n as f64
        },
        max_rpd: records.iter().map(|r| r.rpd).fold(0.0, f64::max),
        needle_queries,
        needle_hits,
        needle_recall: (needle_queries > 0)
            .then(|| needle_hits as f64 / needle_queries as f64),
        matched_expected: records
            .iter()
            .filter(|r| r.matched_expected == Some(true))
            .count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;
    use crate::synth::{generate_synthetic, NeedleSpec};
    use crate::trace::parse_trace;

    fn cfg() -> EngineConfig {
        EngineConfig {
            embed_dim: 64,
            ..EngineConfig::default()
        }
    }

    fn backend(cfg: &EngineConfig) -> Arc<dyn Backend> {
        Arc::new(MockBackend::new(cfg.embed_dim))
    }

    #[test]
    fn single_frame_single_answer_trace() {
        let text = "{\"kind\":\"frame\",\"ts\":0.0,\"caption\":\"a dog\"}\n\
                    {\"kind\":\"query\",\"ts\":1.0,\"question\":\"what\",\"directive\":\"!answer:a dog\",\"expected\":\"a dog\"}\n\
                    {\"kind\":\"close\",\"ts\":2.0}\n";
        let events = parse_trace(text).unwrap();
        let cfg = cfg();
        let out = run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), true).unwrap();
        assert_eq!(out.report.queries.len(), 1);
        let q = &out.report.queries[0];
        assert_eq!(q.phase, Phase::CoarseOnly);
        assert_eq!(q.answer, "a dog");
        assert_eq!(q.matched_expected, Some(true));
        assert!(q.retrieved_node_ids.is_empty());
        assert_eq!(out.report.aggregate.matched_expected, 1);
        // Close flushed the partial window into one leaf.
        assert_eq!(out.engine.state().forest.node_count(), 1);
    }

    #[test]
    fn naive_rag_embeds_the_question_not_the_intent() {
        // The question names "plate", planted in an early window; the
        // intent names "bike", planted in a later one. Naive RAG must
        // follow the question.
        let mut events = Vec::new();
        for i in 0..(4 * 64usize) {
            let ts = i as f64 * 0.5;
            let caption = if (16..24).contains(&i) {
                "a white plate on the table".to_string()
            } else if (80..88).contains(&i) {
                "a red bike by the fence".to_string()
            } else {
                "an empty hallway".to_string()
            };
            events.push(TraceEvent::Frame { ts, caption });
        }
        events.push(TraceEvent::Query {
            ts: 127.6,
            question: "plate".to_string(),
            directive: "!tool:bike!answer:done".to_string(),
            expected: String::new(),
            needle_window: None,
        });
        events.push(TraceEvent::Close { ts: 128.0 });

        let cfg = cfg();
        let naive = run_trace(
            &events,
            cfg.clone(),
            RunMode::NaiveRag,
            backend(&cfg),
            true,
        )
        .unwrap();
        let oasis = run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), true).unwrap();
        let plate_window = TimeInterval::new(Timestamp::from_secs(0.0), Timestamp::from_secs(32.0));
        let bike_window =
            TimeInterval::new(Timestamp::from_secs(32.0), Timestamp::from_secs(64.0));
        let top = |out: &ReplayOutcome| {
            let id = out.report.queries[0].retrieved_node_ids[0];
            out.engine.state().forest.get(id).unwrap().interval
        };
        assert!(top(&naive).overlaps(&plate_window));
        assert!(top(&oasis).overlaps(&bike_window));
    }

    #[test]
    fn stress_mode_matches_deterministic_results() {
        let events = generate_synthetic(
            11,
            4,
            &[NeedleSpec {
                plant_minute: 1.0,
                query_minute: 3.0,
            }],
            64,
        )
        .unwrap();
        let cfg = cfg();
        let det = run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), true).unwrap();
        let stress =
            run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), false).unwrap();
        assert_eq!(det.report.queries.len(), stress.report.queries.len());
        for (d, s) in det.report.queries.iter().zip(&stress.report.queries) {
            assert_eq!(d.answer, s.answer);
            assert_eq!(d.retrieved_node_ids, s.retrieved_node_ids);
            assert_eq!(d.coarse_budget, s.coarse_budget);
        }
    }

    #[test]
    fn deterministic_reports_are_byte_identical() {
        let events = generate_synthetic(5, 3, &[], 64).unwrap();
        let cfg = cfg();
        let a = run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), true).unwrap();
        let b = run_trace(&events, cfg.clone(), RunMode::Oasis, backend(&cfg), true).unwrap();
        assert_eq!(a.report.to_jsonl(), b.report.to_jsonl());
    }
}
