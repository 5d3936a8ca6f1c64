//! Short-window and medium-buffer frame storage.
//!
//! Frames are ingested in timestamp order, viewed through two bounded
//! range queries (short window, medium buffer), and flushed to the
//! event forest in fixed non-overlapping windows of `tau_m` seconds.
//! Frames older than the flushed boundary leave full-fidelity storage;
//! their content survives only in the forest.

use crate::config::EngineConfig;
use crate::frame::FrameRef;
use crate::time::{TimeInterval, Timestamp};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

const TS_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum TierError {
    #[error("out-of-order frame: ts {got} regresses behind {newest}")]
    OutOfOrderFrame { got: Timestamp, newest: Timestamp },
}

/// One closed ingest window, ready to become an event node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowBatch {
    pub interval: TimeInterval,
    /// `min(n_f, available)` frames uniformly sampled from the window.
    pub keyframes: Vec<FrameRef>,
    /// Frame count before sampling.
    pub source_count: usize,
}

/// Full-fidelity frame storage covering at most the unflushed tail of
/// the stream.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TierStore {
    frames: VecDeque<FrameRef>,
    last_flush_end: Timestamp,
}

/// Items at indices `floor(i·m/n)` for `i = 0..n-1`, deduplicated
/// preserving order; everything when `m <= n`.
pub fn uniform_sample<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    let m = items.len();
    if m <= n {
        return items.to_vec();
    }
    let mut out = Vec::with_capacity(n);
    let mut last: Option<usize> = None;
    for i in 0..n {
        let idx = i * m / n;
        if last != Some(idx) {
            out.push(items[idx].clone());
            last = Some(idx);
        }
    }
    out
}

impl TierStore {
    pub fn new() -> Self {
        TierStore::default()
    }

    /// End of the range already handed to the forest.
    pub fn last_flush_end(&self) -> Timestamp {
        self.last_flush_end
    }

    pub fn newest_ts(&self) -> Option<Timestamp> {
        self.frames.back().map(|f| f.ts)
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Ingest one frame. Every window boundary the frame crosses is
    /// closed and returned in temporal order (several at once when the
    /// stream has a gap longer than `tau_m`).
    pub fn push_frame(
        &mut self,
        frame: FrameRef,
        cfg: &EngineConfig,
    ) -> Result<Vec<WindowBatch>, TierError> {
        if let Some(newest) = self.newest_ts() {
            if frame.ts < newest {
                return Err(TierError::OutOfOrderFrame {
                    got: frame.ts,
                    newest,
                });
            }
        }
        let ts = frame.ts;
        self.frames.push_back(frame);

        let mut batches = Vec::new();
        loop {
            let window_end = self.last_flush_end.as_secs() + cfg.tau_m;
            if ts.as_secs() + TS_EPS < window_end {
                break;
            }
            let end = Timestamp::from_secs(window_end);
            batches.push(self.take_window(self.last_flush_end, end, false, cfg.n_f));
            self.last_flush_end = end;
        }
        self.drop_flushed();
        Ok(batches)
    }

    /// Flush the final partial window at stream end. Unlike cadence
    /// windows, frames at exactly `end` are included.
    pub fn close(&mut self, end: Timestamp, cfg: &EngineConfig) -> Option<WindowBatch> {
        if end.as_secs() <= self.last_flush_end.as_secs() + TS_EPS {
            return None;
        }
        let batch = self.take_window(self.last_flush_end, end, true, cfg.n_f);
        self.last_flush_end = end;
        self.drop_flushed();
        Some(batch)
    }

    fn take_window(
        &self,
        start: Timestamp,
        end: Timestamp,
        inclusive_end: bool,
        n_f: usize,
    ) -> WindowBatch {
        let in_window: Vec<FrameRef> = self
            .frames
            .iter()
            .filter(|f| {
                f.ts >= start
                    && if inclusive_end {
                        f.ts <= end
                    } else {
                        f.ts.as_secs() < end.as_secs() - TS_EPS
                    }
            })
            .cloned()
            .collect();
        WindowBatch {
            interval: TimeInterval::new(start, end),
            keyframes: uniform_sample(&in_window, n_f),
            source_count: in_window.len(),
        }
    }

    fn drop_flushed(&mut self) {
        while let Some(front) = self.frames.front() {
            if front.ts < self.last_flush_end {
                self.frames.pop_front();
            } else {
                break;
            }
        }
    }

    /// Retained frames in `[now − tau_s, now]` subsampled to `r_s`,
    /// anchored at the newest frame not after `now`.
    pub fn short_view(&self, now: Timestamp, cfg: &EngineConfig) -> Vec<FrameRef> {
        self.view(now, cfg.tau_s, cfg.r_s)
    }

    /// Retained frames in `[now − tau_m, now]` subsampled to `r_m`.
    pub fn medium_view(&self, now: Timestamp, cfg: &EngineConfig) -> Vec<FrameRef> {
        self.view(now, cfg.tau_m, cfg.r_m)
    }

    fn view(&self, now: Timestamp, horizon: f64, rate: f64) -> Vec<FrameRef> {
        subsample_backward(self.frames.iter(), now, horizon, rate)
    }
}

/// Walk time-ordered frames backward from the newest one at or before
/// `now`, keeping frames spaced at least `1/rate` apart within the
/// horizon. Guarantees the most recent frame is always in view.
pub fn subsample_backward<'a, I>(frames: I, now: Timestamp, horizon: f64, rate: f64) -> Vec<FrameRef>
where
    I: IntoIterator<Item = &'a FrameRef>,
    I::IntoIter: DoubleEndedIterator,
{
    let oldest = now.as_secs() - horizon;
    let step = 1.0 / rate;
    let mut picked: Vec<FrameRef> = Vec::new();
    let mut last_kept: Option<f64> = None;
    for f in frames.into_iter().rev() {
        let ts = f.ts.as_secs();
        if ts > now.as_secs() + TS_EPS {
            continue;
        }
        if ts + TS_EPS < oldest {
            break;
        }
        match last_kept {
            None => {
                picked.push(f.clone());
                last_kept = Some(ts);
            }
            Some(prev) if prev - ts >= step - TS_EPS => {
                picked.push(f.clone());
                last_kept = Some(ts);
            }
            _ => {}
        }
    }
    picked.reverse();
    picked
}
