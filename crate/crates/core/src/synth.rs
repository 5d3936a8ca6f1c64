//! Seeded synthetic trace generation.
//!
//! Produces a deterministic distractor stream with one probe query per
//! minute, plus planted needles: short runs of frames whose captions
//! carry a unique token matching a later query's scripted intent. The
//! needle token is chosen so its embedding bucket collides with nothing
//! else in the trace, making the needle the unique cosine argmax for
//! the intent — while the query *text* is built from decoy vocabulary
//! planted densely in other windows, so question-embedding retrieval is
//! pulled elsewhere. Ground-truth needle windows are recorded on the
//! query events for recall scoring.

use crate::backend::token_bucket;
use crate::trace::TraceEvent;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const FPS: f64 = 2.0;
const WINDOW_SECS: f64 = 32.0;
/// Consecutive frames per needle or decoy run; long enough that
/// 16-of-64 uniform keyframe sampling always catches at least one.
const RUN_LEN: usize = 8;

const VOCAB: &[&str] = &[
    "dog", "cat", "car", "bus", "tree", "lamp", "chair", "table", "plate", "cup", "door",
    "window", "street", "garden", "kitchen", "sofa", "phone", "book", "ball", "bike", "river",
    "bridge", "cloud", "bird", "horse", "train", "boat", "shelf", "mirror", "carpet", "stove",
    "bottle", "jacket", "hat", "glove", "clock", "radio", "screen", "bench", "fence", "roof",
    "stairs", "basket", "candle", "pillow", "curtain", "drawer", "ladder",
];

/// Fixed phrasing words that can appear in captions, questions, and
/// answers. Needle tokens must avoid their buckets too.
const TEMPLATE_WORDS: &[&str] = &[
    "a", "the", "near", "and", "by", "was", "there", "status", "check", "ack", "found", "rare",
    "appears", "q",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeedleSpec {
    pub plant_minute: f64,
    pub query_minute: f64,
}

/// Parse `"2@8,3.5@9"` into needle specs (`plant@query` minutes).
pub fn parse_needle_spec(text: &str) -> Result<Vec<NeedleSpec>, String> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (plant, query) = part
            .split_once('@')
            .ok_or_else(|| format!("bad needle spec {part:?}: expected plant@query"))?;
        let plant_minute: f64 = plant
            .trim()
            .parse()
            .map_err(|_| format!("bad plant minute {plant:?}"))?;
        let query_minute: f64 = query
            .trim()
            .parse()
            .map_err(|_| format!("bad query minute {query:?}"))?;
        out.push(NeedleSpec {
            plant_minute,
            query_minute,
        });
    }
    Ok(out)
}

fn window_index(minute: f64) -> usize {
    (minute * 60.0 / WINDOW_SECS) as usize
}

/// Generate a trace. Byte-identical output for identical arguments.
/// `embed_dim` must match the engine config so needle buckets can be
/// kept collision-free against everything else in the trace.
pub fn generate_synthetic(
    seed: u64,
    minutes: u32,
    needles: &[NeedleSpec],
    embed_dim: usize,
) -> Result<Vec<TraceEvent>, String> {
    if minutes < 1 {
        return Err("minutes must be >= 1".to_string());
    }
    let total_secs = minutes as f64 * 60.0;
    let total_frames = (total_secs * FPS) as usize;
    let total_windows = (total_secs / WINDOW_SECS).ceil() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Buckets no needle token may share: vocabulary, phrasing words,
    // and every numeric token a window boundary can render.
    let mut taken: BTreeSet<usize> = BTreeSet::new();
    for w in VOCAB.iter().chain(TEMPLATE_WORDS) {
        taken.insert(token_bucket(w, embed_dim));
    }
    let mut boundary = 0.0f64;
    while boundary <= total_secs + WINDOW_SECS {
        taken.insert(token_bucket(&format!("{}", boundary as u64), embed_dim));
        boundary += WINDOW_SECS;
    }

    let mut used_windows: BTreeSet<usize> = BTreeSet::new();
    let mut overrides: BTreeMap<usize, String> = BTreeMap::new();
    let mut queries: Vec<TraceEvent> = Vec::new();

    for (i, spec) in needles.iter().enumerate() {
        if spec.plant_minute < 0.0 || spec.query_minute > minutes as f64 {
            return Err(format!("needle {i}: minutes out of range"));
        }
        let win = window_index(spec.plant_minute);
        if win >= total_windows {
            return Err(format!("needle {i}: plant window past stream end"));
        }
        let window_end = (win as f64 + 1.0) * WINDOW_SECS;
        if spec.query_minute * 60.0 < window_end + WINDOW_SECS {
            return Err(format!(
                "needle {i}: query must arrive at least one window after the plant is flushed"
            ));
        }
        if !used_windows.insert(win) {
            return Err(format!("needle {i}: plant window already in use"));
        }

        let token = pick_free_token(&mut rng, embed_dim, &mut taken)?;
        plant_run(
            &mut overrides,
            win,
            &format!("a rare {token} appears"),
            total_frames,
        );

        // Decoy windows densely match the question vocabulary so that
        // question-embedding retrieval lands far from the needle.
        let decoy_words: Vec<&str> = VOCAB
            .choose_multiple(&mut rng, 4)
            .copied()
            .collect();
        let mut placed = 0;
        let mut candidate = 0usize;
        for frac in [0.35, 0.60, 0.85] {
            candidate = candidate.max((total_windows as f64 * frac) as usize);
            while used_windows.contains(&candidate) {
                candidate += 1;
            }
            if candidate >= total_windows {
                break;
            }
            used_windows.insert(candidate);
            plant_run(
                &mut overrides,
                candidate,
                &format!(
                    "the {} {} near the {} {}",
                    decoy_words[0], decoy_words[1], decoy_words[2], decoy_words[3]
                ),
                total_frames,
            );
            placed += 1;
        }
        if placed == 0 {
            return Err(format!("needle {i}: no room for decoy windows"));
        }

        let question = format!(
            "was there a {} {} near the {} {}",
            decoy_words[0], decoy_words[1], decoy_words[2], decoy_words[3]
        );
        queries.push(TraceEvent::Query {
            ts: spec.query_minute * 60.0 - 0.1,
            question,
            directive: format!("!tool:{token}!answer:found {token}"),
            expected: format!("found {token}"),
            needle_window: Some((win as f64 * WINDOW_SECS, window_end)),
        });
    }

    let mut events: Vec<TraceEvent> = Vec::with_capacity(total_frames + minutes as usize + 2);
    for idx in 0..total_frames {
        let caption = overrides.remove(&idx).unwrap_or_else(|| {
            let w1 = VOCAB.choose(&mut rng).unwrap();
            let w2 = VOCAB.choose(&mut rng).unwrap();
            let w3 = VOCAB.choose(&mut rng).unwrap();
            format!("a {w1} near the {w2} and {w3}")
        });
        events.push(TraceEvent::Frame {
            ts: idx as f64 / FPS,
            caption,
        });
    }
    for m in 1..=minutes {
        events.push(TraceEvent::Query {
            ts: m as f64 * 60.0 - 0.25,
            question: "status check".to_string(),
            directive: "!answer:ack".to_string(),
            expected: "ack".to_string(),
            needle_window: None,
        });
    }
    events.extend(queries);
    events.push(TraceEvent::Close { ts: total_secs });
    events.sort_by(|a, b| a.ts().total_cmp(&b.ts()));
    Ok(events)
}

fn pick_free_token(
    rng: &mut ChaCha8Rng,
    embed_dim: usize,
    taken: &mut BTreeSet<usize>,
) -> Result<String, String> {
    for _ in 0..10_000 {
        let token: String = (0..7)
            .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
            .collect();
        let bucket = token_bucket(&token, embed_dim);
        if !taken.contains(&bucket) {
            taken.insert(bucket);
            return Ok(token);
        }
    }
    Err(format!(
        "could not find a collision-free needle token at embed_dim {embed_dim}"
    ))
}

fn plant_run(
    overrides: &mut BTreeMap<usize, String>,
    window: usize,
    caption: &str,
    total_frames: usize,
) {
    // Runs sit 8 s into the window, comfortably clear of both edges.
    let start_ts = window as f64 * WINDOW_SECS + 8.0;
    let start_idx = (start_ts * FPS) as usize;
    for i in 0..RUN_LEN {
        let idx = start_idx + i;
        if idx < total_frames {
            overrides.insert(idx, caption.to_string());
        }
    }
}
