use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::clock::ClockOffset;
use crate::domain::Timestamp;

pub const WINDOW_CAPACITY: usize = 256;
/// One-way budget from vehicle to twin entity.
pub const LATENCY_THRESHOLD_MS: f64 = 100.0;

/// Rolling one-way latency window. Violations and skew events are counted
/// over every sample ever recorded, not just the window.
#[derive(Debug, Clone)]
pub struct LatencyMonitor {
    window: VecDeque<f64>,
    capacity: usize,
    threshold_ms: f64,
    violation_count: u64,
    clock_skew_events: u64,
    total_recorded: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub violation_count: u64,
}

impl Default for LatencyMonitor {
    fn default() -> Self {
        Self::new(LATENCY_THRESHOLD_MS)
    }
}

impl LatencyMonitor {
    pub fn new(threshold_ms: f64) -> Self {
        Self {
            window: VecDeque::with_capacity(WINDOW_CAPACITY),
            capacity: WINDOW_CAPACITY,
            threshold_ms,
            violation_count: 0,
            clock_skew_events: 0,
            total_recorded: 0,
        }
    }

    /// `send_ts` is on the sender's clock, `recv_ts` on ours; `offset` is the
    /// sender's clock relative to ours.
    pub fn record_latency(&mut self, send_ts: Timestamp, recv_ts: Timestamp, offset: &ClockOffset) {
        let send_local = offset.to_local(send_ts);
        let mut ms = recv_ts.signed_diff(send_local) as f64 / 1_000.0;
        if ms < 0.0 {
            ms = 0.0;
            self.clock_skew_events += 1;
        }
        self.push_sample(ms);
    }

    pub fn push_sample(&mut self, ms: f64) {
        if ms > self.threshold_ms {
            self.violation_count += 1;
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(ms);
        self.total_recorded += 1;
    }

    pub fn violation_count(&self) -> u64 {
        self.violation_count
    }

    pub fn clock_skew_events(&self) -> u64 {
        self.clock_skew_events
    }

    pub fn total_recorded(&self) -> u64 {
        self.total_recorded
    }

    pub fn threshold_ms(&self) -> f64 {
        self.threshold_ms
    }

    pub fn samples(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn latency_stats(&self) -> LatencyStats {
        let n = self.window.len();
        if n == 0 {
            return LatencyStats {
                violation_count: self.violation_count,
                ..LatencyStats::default()
            };
        }
        let mut sorted: Vec<f64> = self.window.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let mean_ms = sorted.iter().sum::<f64>() / n as f64;
        LatencyStats {
            count: n,
            mean_ms,
            p95_ms: nearest_rank(&sorted, 95.0),
            max_ms: sorted[n - 1],
            violation_count: self.violation_count,
        }
    }
}

/// Nearest-rank percentile over an ascending, non-empty slice.
fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_ms_sample() {
        let mut m = LatencyMonitor::default();
        m.record_latency(Timestamp(0), Timestamp(10_000), &ClockOffset::default());
        let s = m.latency_stats();
        assert_eq!(s.count, 1);
        assert_eq!(s.mean_ms, 10.0);
        assert_eq!(s.violation_count, 0);
    }

    #[test]
    fn over_budget_counts_violation() {
        let mut m = LatencyMonitor::default();
        m.push_sample(150.0);
        assert_eq!(m.violation_count(), 1);
        m.push_sample(100.0);
        assert_eq!(m.violation_count(), 1);
    }

    #[test]
    fn mean_and_max() {
        let mut m = LatencyMonitor::default();
        for v in [10.0, 20.0, 30.0] {
            m.push_sample(v);
        }
        let s = m.latency_stats();
        assert_eq!(s.mean_ms, 20.0);
        assert_eq!(s.max_ms, 30.0);
    }

    #[test]
    fn empty_stats_are_zero() {
        let s = LatencyMonitor::default().latency_stats();
        assert_eq!(s, LatencyStats::default());
    }

    #[test]
    fn p95_nearest_rank() {
        let mut m = LatencyMonitor::default();
        for _ in 0..100 {
            m.push_sample(10.0);
        }
        assert_eq!(m.latency_stats().p95_ms, 10.0);

        let mut m = LatencyMonitor::default();
        for v in 1..=100 {
            m.push_sample(v as f64);
        }
        assert_eq!(m.latency_stats().p95_ms, 95.0);
    }

    #[test]
    fn offset_corrected_and_skew_clamped() {
        let mut m = LatencyMonitor::default();
        // Sender clock runs 5 s ahead of ours.
        let off = ClockOffset { offset_us: 5_000_000, rtt_us: 0, rounds_used: 1 };
        m.record_latency(Timestamp(5_000_000 + 1_000), Timestamp(21_000), &off);
        assert_eq!(m.latency_stats().max_ms, 20.0);
        m.record_latency(Timestamp(5_100_000), Timestamp(50_000), &off);
        assert_eq!(m.clock_skew_events(), 1);
        assert_eq!(m.samples().last(), Some(0.0));
    }

    #[test]
    fn window_is_bounded() {
        let mut m = LatencyMonitor::default();
        for _ in 0..300 {
            m.push_sample(150.0);
        }
        assert_eq!(m.latency_stats().count, WINDOW_CAPACITY);
        assert_eq!(m.violation_count(), 300);
        assert_eq!(m.total_recorded(), 300);
    }

    proptest! {
        #[test]
        fn violations_match_samples_over_threshold(samples in proptest::collection::vec(0.0f64..300.0, 0..200)) {
            let mut m = LatencyMonitor::default();
            for &s in &samples {
                m.push_sample(s);
            }
            let expected = samples.iter().filter(|&&s| s > 100.0).count() as u64;
            prop_assert_eq!(m.violation_count(), expected);
        }
    }
}
