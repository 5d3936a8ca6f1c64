//! Stream-relative time arithmetic.
//!
//! All timestamps are seconds since stream start (t = 0 at the first
//! frame); nothing here touches the wall clock.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

/// Seconds since stream start. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Timestamp(f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn from_secs(secs: f64) -> Self {
        debug_assert!(secs.is_finite() && secs >= 0.0, "bad timestamp {secs}");
        Timestamp(secs)
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }

    /// Shift by `delta` seconds, saturating at stream start.
    pub fn offset(self, delta: f64) -> Timestamp {
        Timestamp((self.0 + delta).max(0.0))
    }
}

impl Eq for Timestamp {}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        // Finite by construction, so total_cmp agrees with numeric order.
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", fmt_secs(self.0))
    }
}

/// Render seconds without a trailing `.0` on whole values: `32`, `31.5`.
pub(crate) fn fmt_secs(secs: f64) -> String {
    if secs.fract() == 0.0 {
        format!("{}", secs as i64)
    } else {
        format!("{secs}")
    }
}

/// Half-open time span `[start, end)`. Consecutive windows and sibling
/// event nodes are adjacent exactly when one's `end` equals the other's
/// `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeInterval {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        debug_assert!(start <= end, "inverted interval");
        TimeInterval { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end.as_secs() - self.start.as_secs()
    }

    pub fn overlaps(&self, other: &TimeInterval) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when `self` strictly contains `other`. In a well-formed
    /// forest two distinct nodes nest exactly when they share lineage.
    pub fn strictly_contains(&self, other: &TimeInterval) -> bool {
        self.start <= other.start && other.end <= self.end && self != other
    }

    pub fn contains_ts(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}\u{2013}{}]", self.start, self.end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_renders_with_en_dash_and_bare_integers() {
        let iv = TimeInterval::new(Timestamp::from_secs(0.0), Timestamp::from_secs(32.0));
        assert_eq!(iv.to_string(), "[0\u{2013}32]");
        let iv = TimeInterval::new(Timestamp::from_secs(8.5), Timestamp::from_secs(12.0));
        assert_eq!(iv.to_string(), "[8.5\u{2013}12]");
    }

    #[test]
    fn overlap_is_half_open() {
        let a = TimeInterval::new(Timestamp::from_secs(0.0), Timestamp::from_secs(32.0));
        let b = TimeInterval::new(Timestamp::from_secs(32.0), Timestamp::from_secs(64.0));
        assert!(!a.overlaps(&b));
        let c = TimeInterval::new(Timestamp::from_secs(31.0), Timestamp::from_secs(33.0));
        assert!(a.overlaps(&c) && c.overlaps(&b));
    }

    #[test]
    fn strict_containment_excludes_self() {
        let a = TimeInterval::new(Timestamp::from_secs(0.0), Timestamp::from_secs(64.0));
        let b = TimeInterval::new(Timestamp::from_secs(0.0), Timestamp::from_secs(32.0));
        assert!(a.strictly_contains(&b));
        assert!(!b.strictly_contains(&a));
        assert!(!a.strictly_contains(&a));
    }

    #[test]
    fn timestamp_offset_saturates_at_zero() {
        let t = Timestamp::from_secs(3.0);
        assert_eq!(t.offset(-10.0), Timestamp::ZERO);
        assert_eq!(t.offset(1.5).as_secs(), 4.5);
    }
}
