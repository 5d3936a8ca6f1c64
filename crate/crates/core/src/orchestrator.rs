//! Two-phase reasoning.
//!
//! A query is answered against an immutable snapshot of the memory
//! taken at arrival. The coarse pass sees only the immediately
//! accessible memory (tier views, root summaries, dialogue digest).
//! If the model replies with a tool call instead of an answer, the
//! carried intent is embedded and drives exactly one retrieval round
//! over the event forest and QA history; the retrieved evidence is
//! appended as a tool turn and the model is called once more. The only
//! memory write a query causes is the single QA fold applied by the
//! engine after the final answer.

use crate::backend::{Backend, ChatTurn};
use crate::config::EngineConfig;
use crate::engine::{EngineError, MemoryState};
use crate::forest::NodeId;
use crate::frame::FrameRef;
use crate::modes::RunMode;
use crate::time::{TimeInterval, Timestamp};
use crate::tokens::{context_token_cost, TokenBudget};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::Instant;
use thiserror::Error;

/// Rate at which the full-context baseline samples the whole history.
pub const FULL_CONTEXT_FPS: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
#[error("malformed response: no answer or tool_call tag found")]
pub struct MalformedResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    CoarseOnly,
    Fine,
}

/// Parsed result of one model turn.
#[derive(Debug, Clone, PartialEq)]
pub enum ReasoningOutcome {
    FinalAnswer {
        answer: String,
        think: Option<String>,
    },
    ToolCall {
        intent: String,
        think: Option<String>,
    },
}

/// Everything the coarse pass can see.
#[derive(Debug, Clone)]
pub struct CoarseContext {
    pub system_prompt: String,
    pub short_frames: Vec<FrameRef>,
    /// Deduplicated against `short_frames` by payload id; the short
    /// window wins so no frame is charged twice.
    pub medium_frames: Vec<FrameRef>,
    pub root_summaries: Vec<(TimeInterval, String)>,
    pub qa_summary: String,
    pub question: String,
}

/// Evidence retrieved for the fine pass.
#[derive(Debug, Clone, Default)]
pub struct FineContext {
    pub nodes: Vec<RetrievedNode>,
    pub qa_pairs: Vec<(String, String, Timestamp)>,
}

#[derive(Debug, Clone)]
pub struct RetrievedNode {
    pub id: NodeId,
    pub interval: TimeInterval,
    pub keyframes: Vec<FrameRef>,
    pub summary: String,
}

/// One query as the harness sees it: the user's question, an optional
/// scripted directive for the mock backend (appended to the backend-
/// visible turn text but never embedded or stored), and stream time.
#[derive(Debug, Clone, Copy)]
pub struct QueryInput<'a> {
    pub question: &'a str,
    pub directive: Option<&'a str>,
    pub now: Timestamp,
}

/// Outcome of one answered query with full budget accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryReport {
    pub question: String,
    pub answer: String,
    pub phase: Phase,
    pub intent: Option<String>,
    pub retrieved: Vec<(NodeId, TimeInterval)>,
    pub coarse_budget: TokenBudget,
    pub fine_budget: Option<TokenBudget>,
    /// Seconds from arrival to the first reasoning dispatch.
    pub rpd: f64,
    /// Seconds from arrival to the final answer.
    pub end_to_end: f64,
    /// Newest stream timestamp visible anywhere in the query's context.
    pub context_horizon: Timestamp,
    /// Audit notes: malformed retries, hard-stopped second tool calls.
    pub events: Vec<String>,
}

/// Deferred memory write: the QA fold applied after the final answer.
#[derive(Debug, Clone)]
pub struct FoldRequest {
    pub question: String,
    pub answer: String,
    pub at: Timestamp,
}

/// Split a raw model response into answer/tool-call/think parts.
///
/// The first well-formed `<answer>…</answer>` region wins; otherwise
/// the first `<tool_call>…</tool_call>` region whose body is a JSON
/// object with a string `query` field. Text before the winning tag is
/// the think trace.
pub fn parse_outcome(raw: &str) -> Result<ReasoningOutcome, MalformedResponse> {
    if let Some((inner, start)) = tag_region(raw, "answer") {
        return Ok(ReasoningOutcome::FinalAnswer {
            answer: inner.to_string(),
            think: think_before(raw, start),
        });
    }
    let mut from = 0;
    while let Some((body, start)) = tag_region(&raw[from..], "tool_call") {
        let abs_start = from + start;
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(body) {
            if let Some(serde_json::Value::String(query)) = map.get("query") {
                return Ok(ReasoningOutcome::ToolCall {
                    intent: query.clone(),
                    think: think_before(raw, abs_start),
                });
            }
        }
        from = abs_start + "<tool_call>".len();
    }
    Err(MalformedResponse)
}

fn tag_region<'a>(text: &'a str, tag: &str) -> Option<(&'a str, usize)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open)?;
    let body_start = start + open.len();
    let end = text[body_start..].find(&close)? + body_start;
    Some((&text[body_start..end], start))
}

fn think_before(raw: &str, tag_start: usize) -> Option<String> {
    let think = raw[..tag_start].trim();
    (!think.is_empty()).then(|| think.to_string())
}

fn system_prompt(mode: RunMode) -> String {
    let mut p = String::from(
        "You are a streaming video assistant. Answer about the stream \
         using the provided frames and memory.\n\
         Wrap your final answer in <answer></answer> tags.",
    );
    if mode.retrieval_enabled() {
        p.push_str(
            "\nIf the accessible context is insufficient, do not guess: \
             emit <tool_call>{\"query\": \"<what evidence would decide \
             the answer>\"}</tool_call> to search long-term memory.",
        );
    }
    p
}

/// Assemble the coarse context from a memory snapshot; a pure read.
pub fn build_coarse_context(
    state: &MemoryState,
    cfg: &EngineConfig,
    mode: RunMode,
    question: &str,
    now: Timestamp,
) -> CoarseContext {
    if mode == RunMode::FullContext {
        let all = crate::tiers::subsample_backward(
            state.history.iter(),
            now,
            now.as_secs(),
            FULL_CONTEXT_FPS,
        );
        return CoarseContext {
            system_prompt: system_prompt(mode),
            short_frames: all,
            medium_frames: Vec::new(),
            root_summaries: Vec::new(),
            qa_summary: String::new(),
            question: question.to_string(),
        };
    }
    let short = state.tiers.short_view(now, cfg);
    let short_ids: HashSet<u64> = short.iter().map(|f| f.payload_id).collect();
    let medium: Vec<FrameRef> = state
        .tiers
        .medium_view(now, cfg)
        .into_iter()
        .filter(|f| !short_ids.contains(&f.payload_id))
        .collect();
    CoarseContext {
        system_prompt: system_prompt(mode),
        short_frames: short,
        medium_frames: medium,
        root_summaries: state
            .forest
            .root_summaries()
            .into_iter()
            .map(|(iv, s)| (iv, s.to_string()))
            .collect(),
        qa_summary: state.qa.summary().to_string(),
        question: question.to_string(),
    }
}

fn render_coarse_text(ctx: &CoarseContext, mode: RunMode, directive: Option<&str>) -> String {
    let mut out = String::new();
    if mode == RunMode::FullContext {
        out.push_str("All sampled history frames are attached.\n");
    } else {
        out.push_str("Recent frames are attached: short window first, then medium buffer.\n");
        out.push_str("Long-term event summaries:\n");
        if ctx.root_summaries.is_empty() {
            out.push_str("(none)\n");
        }
        for (iv, s) in &ctx.root_summaries {
            out.push_str(&format!("{iv} {s}\n"));
        }
        out.push_str("Dialogue summary:\n");
        if ctx.qa_summary.is_empty() {
            out.push_str("(none)\n");
        } else {
            out.push_str(&ctx.qa_summary);
            out.push('\n');
        }
    }
    out.push_str("Question: ");
    out.push_str(&ctx.question);
    if let Some(d) = directive {
        out.push(' ');
        out.push_str(d);
    }
    out
}

fn render_fine_text(fine: &FineContext) -> String {
    let mut out = String::from("Retrieved evidence (keyframes attached):\n");
    if fine.nodes.is_empty() {
        out.push_str("(no matching events)\n");
    }
    for n in &fine.nodes {
        out.push_str(&format!("{} {}\n", n.interval, n.summary));
    }
    out.push_str("Related past exchanges:\n");
    if fine.qa_pairs.is_empty() {
        out.push_str("(none)\n");
    }
    for (q, a, at) in &fine.qa_pairs {
        out.push_str(&format!("Q: {q} A: {a} (asked at {at})\n"));
    }
    out
}

fn horizon(frames: &[FrameRef], acc: &mut Timestamp) {
    for f in frames {
        if f.ts > *acc {
            *acc = f.ts;
        }
    }
}

/// Run one query against a memory snapshot. Read-only: the returned
/// [`FoldRequest`] is the single write the engine applies afterwards.
pub fn run_query(
    state: &MemoryState,
    cfg: &EngineConfig,
    mode: RunMode,
    backend: &dyn Backend,
    input: QueryInput<'_>,
    arrival: Instant,
) -> Result<(QueryReport, FoldRequest), EngineError> {
    let ctx = build_coarse_context(state, cfg, mode, input.question, input.now);
    let mut context_horizon = Timestamp::ZERO;
    horizon(&ctx.short_frames, &mut context_horizon);
    horizon(&ctx.medium_frames, &mut context_horizon);
    for (iv, _) in &ctx.root_summaries {
        if iv.end > context_horizon {
            context_horizon = iv.end;
        }
    }

    let user_text = render_coarse_text(&ctx, mode, input.directive);
    let mut attachments = ctx.short_frames.clone();
    attachments.extend(ctx.medium_frames.iter().cloned());
    attachments.sort_by(|a, b| a.ts.cmp(&b.ts).then(a.payload_id.cmp(&b.payload_id)));

    let coarse_budget = context_token_cost(
        attachments.len(),
        [ctx.system_prompt.as_str(), user_text.as_str()],
        cfg.frame_token_cost,
    );

    let mut turns = vec![
        ChatTurn::system(ctx.system_prompt.clone()),
        ChatTurn::user(user_text, attachments),
    ];

    let mut events = Vec::new();
    let rpd = arrival.elapsed().as_secs_f64();
    let raw = backend.reason(&turns)?;
    let outcome = match parse_outcome(&raw) {
        Ok(o) => o,
        Err(MalformedResponse) => {
            // One retry with an instruction reminder, then fall back to
            // the raw text: availability over strictness.
            events.push("malformed coarse response; retried".to_string());
            turns.push(ChatTurn {
                role: crate::backend::Role::Assistant,
                text: raw,
                attachments: vec![],
            });
            turns.push(ChatTurn::user(
                "Format reminder: wrap your answer in <answer></answer> \
                 or request evidence with a <tool_call>.",
                vec![],
            ));
            let retry = backend.reason(&turns)?;
            match parse_outcome(&retry) {
                Ok(o) => o,
                Err(MalformedResponse) => {
                    events.push("retry still malformed; raw-text fallback".to_string());
                    ReasoningOutcome::FinalAnswer {
                        answer: retry,
                        think: None,
                    }
                }
            }
        }
    };

    let (report, fold) = match outcome {
        ReasoningOutcome::FinalAnswer { answer, .. } => {
            let report = QueryReport {
                question: input.question.to_string(),
                answer: answer.clone(),
                phase: Phase::CoarseOnly,
                intent: None,
                retrieved: Vec::new(),
                coarse_budget,
                fine_budget: None,
                rpd,
                end_to_end: arrival.elapsed().as_secs_f64(),
                context_horizon,
                events,
            };
            let fold = FoldRequest {
                question: input.question.to_string(),
                answer,
                at: input.now,
            };
            (report, fold)
        }
        ReasoningOutcome::ToolCall { intent, .. } if !mode.retrieval_enabled() => {
            // No retrieval in this mode; surface the raw tool request.
            events.push("tool_call without retrieval; raw-text fallback".to_string());
            let answer = raw_tool_fallback(&intent);
            let report = QueryReport {
                question: input.question.to_string(),
                answer: answer.clone(),
                phase: Phase::CoarseOnly,
                intent: Some(intent),
                retrieved: Vec::new(),
                coarse_budget,
                fine_budget: None,
                rpd,
                end_to_end: arrival.elapsed().as_secs_f64(),
                context_horizon,
                events,
            };
            let fold = FoldRequest {
                question: input.question.to_string(),
                answer,
                at: input.now,
            };
            (report, fold)
        }
        ReasoningOutcome::ToolCall { intent, .. } => {
            // Retrieval embeds the model's intent, not the question —
            // except under naive RAG, which is defined by embedding the
            // raw question.
            let probe = if mode.embeds_question() {
                input.question
            } else {
                intent.as_str()
            };
            let query_vec = backend.embed(probe)?;
            let nodes: Vec<RetrievedNode> = state
                .forest
                .retrieve_pruned(&query_vec, cfg.k_f)
                .into_iter()
                .map(|n| RetrievedNode {
                    id: n.id,
                    interval: n.interval,
                    keyframes: n.keyframes.clone(),
                    summary: n.summary.clone(),
                })
                .collect();
            let qa_pairs: Vec<(String, String, Timestamp)> = state
                .qa
                .retrieve_qa(&query_vec, cfg.k_q)
                .into_iter()
                .map(|r| (r.question.clone(), r.answer.clone(), r.asked_at))
                .collect();
            let fine = FineContext { nodes, qa_pairs };

            for n in &fine.nodes {
                if n.interval.end > context_horizon {
                    context_horizon = n.interval.end;
                }
            }
            for (_, _, at) in &fine.qa_pairs {
                if *at > context_horizon {
                    context_horizon = *at;
                }
            }

            let fine_text = render_fine_text(&fine);
            let fine_attachments: Vec<FrameRef> = fine
                .nodes
                .iter()
                .flat_map(|n| n.keyframes.iter().cloned())
                .collect();
            let fine_budget = context_token_cost(
                fine_attachments.len(),
                [fine_text.as_str()],
                cfg.frame_token_cost,
            );
            turns.push(ChatTurn::tool(fine_text, fine_attachments));

            let raw2 = backend.reason(&turns)?;
            let answer = match parse_outcome(&raw2) {
                Ok(ReasoningOutcome::FinalAnswer { answer, .. }) => answer,
                Ok(ReasoningOutcome::ToolCall { .. }) => {
                    // One retrieval round only; a second tool call is
                    // logged and the raw text stands as the answer.
                    events.push("fine pass emitted another tool_call; hard stop".to_string());
                    raw2
                }
                Err(MalformedResponse) => raw2,
            };
            let retrieved = fine.nodes.iter().map(|n| (n.id, n.interval)).collect();
            let report = QueryReport {
                question: input.question.to_string(),
                answer: answer.clone(),
                phase: Phase::Fine,
                intent: Some(intent),
                retrieved,
                coarse_budget,
                fine_budget: Some(fine_budget),
                rpd,
                end_to_end: arrival.elapsed().as_secs_f64(),
                context_horizon,
                events,
            };
            let fold = FoldRequest {
                question: input.question.to_string(),
                answer,
                at: input.now,
            };
            (report, fold)
        }
    };
    Ok((report, fold))
}

fn raw_tool_fallback(intent: &str) -> String {
    format!("<tool_call>{{\"query\": {}}}</tool_call>", serde_json::to_string(intent).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_tag_parses_directly() {
        let got = parse_outcome("<answer>five</answer>").unwrap();
        assert_eq!(
            got,
            ReasoningOutcome::FinalAnswer {
                answer: "five".to_string(),
                think: None
            }
        );
    }

    #[test]
    fn tool_call_with_think_prefix() {
        let raw = "I must check history. <tool_call>{\"query\": \"people in the living room\"}</tool_call>";
        let got = parse_outcome(raw).unwrap();
        assert_eq!(
            got,
            ReasoningOutcome::ToolCall {
                intent: "people in the living room".to_string(),
                think: Some("I must check history.".to_string()),
            }
        );
    }

    #[test]
    fn untagged_text_is_malformed() {
        assert_eq!(parse_outcome("no tags at all"), Err(MalformedResponse));
    }

    #[test]
    fn answer_takes_precedence_over_tool_call() {
        let raw = "<tool_call>{\"query\": \"x\"}</tool_call> <answer>y</answer>";
        assert!(matches!(
            parse_outcome(raw).unwrap(),
            ReasoningOutcome::FinalAnswer { answer, .. } if answer == "y"
        ));
    }

    #[test]
    fn bad_tool_payloads_are_skipped_until_one_parses() {
        let raw = "<tool_call>not json</tool_call><tool_call>{\"query\": \"ok\"}</tool_call>";
        assert!(matches!(
            parse_outcome(raw).unwrap(),
            ReasoningOutcome::ToolCall { intent, .. } if intent == "ok"
        ));
        // A query field that is not a string never parses.
        assert_eq!(
            parse_outcome("<tool_call>{\"query\": 3}</tool_call>"),
            Err(MalformedResponse)
        );
    }
}
