//! Request/response clock offset estimation.
//!
//! Each round records local send `t0`, peer receive `t1`, peer send `t2` and
//! local receive `t3`. Under symmetric path delay the offset estimate is
//! exact; otherwise its error is bounded by half the delay asymmetry. The
//! round with the smallest round-trip time wins.

use std::time::Duration;

use thiserror::Error;

use super::envelope::{EncodeError, MsgType, SequenceCounters};
use super::payload::{Message, Payload};
use super::transport::Transport;
use crate::domain::Timestamp;

pub const DEFAULT_ROUNDS: u32 = 8;
pub const DEFAULT_ROUND_TIMEOUT: Duration = Duration::from_millis(500);
pub const RESYNC_INTERVAL: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("clock sync failed: no round completed out of {attempted}")]
    SyncFailed { attempted: u32 },
    #[error("round count must be at least 1")]
    NoRounds,
    #[error("transport error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Estimated offset of a remote clock relative to the local one
/// (`remote - local`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClockOffset {
    pub offset_us: i64,
    pub rtt_us: u64,
    pub rounds_used: u32,
}

impl ClockOffset {
    /// Map a timestamp taken on the remote clock onto the local clock.
    pub fn to_local(&self, remote: Timestamp) -> Timestamp {
        remote.offset_by(-self.offset_us)
    }

    pub fn to_remote(&self, local: Timestamp) -> Timestamp {
        local.offset_by(self.offset_us)
    }

    pub fn offset_ms(&self) -> f64 {
        self.offset_us as f64 / 1_000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncSample {
    pub t0: Timestamp,
    pub t1: Timestamp,
    pub t2: Timestamp,
    pub t3: Timestamp,
}

impl SyncSample {
    pub fn offset_us(&self) -> i64 {
        let a = self.t1.signed_diff(self.t0);
        let b = self.t2.signed_diff(self.t3);
        (a + b).div_euclid(2)
    }

    /// Round trip minus peer processing time. `None` when the four
    /// timestamps are inconsistent.
    pub fn rtt_us(&self) -> Option<u64> {
        let rtt = self.t3.signed_diff(self.t0) - self.t2.signed_diff(self.t1);
        u64::try_from(rtt).ok()
    }
}

/// Pick the minimum-RTT sample. Earlier rounds win ties.
pub fn best_offset(samples: &[SyncSample]) -> Option<ClockOffset> {
    let usable: Vec<(u64, &SyncSample)> = samples
        .iter()
        .filter_map(|s| s.rtt_us().map(|r| (r, s)))
        .collect();
    let rounds_used = usable.len() as u32;
    usable
        .into_iter()
        .min_by_key(|(rtt, _)| *rtt)
        .map(|(rtt, s)| ClockOffset {
            offset_us: s.offset_us(),
            rtt_us: rtt,
            rounds_used,
        })
}

/// Build the reply to a TIME_REQ. The reply echoes the request sequence so
/// the requester can pair them.
pub fn answer_time_request(request: &Message, t1: Timestamp, t2: Timestamp) -> Option<Message> {
    match request.payload {
        Payload::TimeReq => Some(Message {
            sequence: request.sequence,
            send_timestamp: t2,
            payload: Payload::TimeResp { t1, t2 },
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SyncOptions {
    pub rounds: u32,
    pub round_timeout: Duration,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            round_timeout: DEFAULT_ROUND_TIMEOUT,
        }
    }
}

/// Non-blocking sync driver for event loops: call [`SyncSession::poll`]
/// every tick and feed it TIME_RESP frames as they arrive.
#[derive(Debug, Clone)]
pub struct SyncSession {
    opts: SyncOptions,
    attempted: u32,
    outstanding: Option<(u32, Timestamp)>,
    samples: Vec<SyncSample>,
}

impl SyncSession {
    pub fn new(opts: SyncOptions) -> Self {
        Self {
            opts,
            attempted: 0,
            outstanding: None,
            samples: Vec::new(),
        }
    }

    /// Returns a TIME_REQ to send, if one is due.
    pub fn poll(&mut self, now: Timestamp, seq: &mut SequenceCounters) -> Option<Message> {
        if let Some((_, t0)) = self.outstanding {
            let timeout = self.opts.round_timeout.as_micros() as u64;
            if now.micros() < t0.micros().saturating_add(timeout) {
                return None;
            }
            self.outstanding = None;
        }
        if self.attempted >= self.opts.rounds {
            return None;
        }
        self.attempted += 1;
        let sequence = seq.next(MsgType::TimeReq);
        self.outstanding = Some((sequence, now));
        Some(Message {
            sequence,
            send_timestamp: now,
            payload: Payload::TimeReq,
        })
    }

    /// Feed a TIME_RESP. Returns `true` if it matched the outstanding round.
    pub fn on_response(&mut self, msg: &Message, recv_ts: Timestamp) -> bool {
        let Payload::TimeResp { t1, t2 } = msg.payload else {
            return false;
        };
        match self.outstanding {
            Some((seq, t0)) if seq == msg.sequence => {
                self.samples.push(SyncSample {
                    t0,
                    t1,
                    t2,
                    t3: recv_ts,
                });
                self.outstanding = None;
                true
            }
            _ => false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.attempted >= self.opts.rounds && self.outstanding.is_none()
    }

    pub fn samples(&self) -> &[SyncSample] {
        &self.samples
    }

    pub fn result(&self) -> Result<ClockOffset, SyncError> {
        best_offset(&self.samples).ok_or(SyncError::SyncFailed {
            attempted: self.attempted,
        })
    }
}

/// Blocking sync against a peer that answers TIME_REQ. Frames other than the
/// matching TIME_RESP are discarded while syncing.
pub fn clock_sync<T: Transport>(
    transport: &mut T,
    seq: &mut SequenceCounters,
    opts: SyncOptions,
) -> Result<ClockOffset, SyncError> {
    if opts.rounds == 0 {
        return Err(SyncError::NoRounds);
    }
    let mut session = SyncSession::new(opts);
    while !session.is_done() {
        let now = transport.now();
        let Some(req) = session.poll(now, seq) else {
            break;
        };
        transport.send(&req.encode()?)?;
        let deadline = now.saturating_add_micros(opts.round_timeout.as_micros() as u64);
        while let Some(rx) = transport.recv_until(deadline)? {
            let Ok(msg) = Message::decode(&rx.bytes) else {
                continue;
            };
            if session.on_response(&msg, rx.recv_ts) {
                break;
            }
        }
        // On timeout the next poll opens a fresh round.
        if !session.is_done() && session.outstanding.is_some() {
            session.outstanding = None;
        }
    }
    session.result()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(us: u64) -> Timestamp {
        Timestamp(us)
    }

    #[test]
    fn four_timestamp_example() {
        let s = SyncSample {
            t0: ts(1000),
            t1: ts(1500),
            t2: ts(1510),
            t3: ts(1030),
        };
        assert_eq!(s.offset_us(), 490);
        assert_eq!(s.rtt_us(), Some(20));
        // Symmetric-delay model: delay 10, offset 490.
        assert_eq!(1000 + 10 + 490, 1500);
        assert_eq!(1510 - 490 + 10, 1030);
    }

    #[test]
    fn zero_delay_equal_clocks() {
        let s = SyncSample {
            t0: ts(5),
            t1: ts(5),
            t2: ts(5),
            t3: ts(5),
        };
        assert_eq!(s.offset_us(), 0);
        assert_eq!(s.rtt_us(), Some(0));
    }

    #[test]
    fn min_rtt_round_selected() {
        let samples = [
            SyncSample { t0: ts(0), t1: ts(600), t2: ts(600), t3: ts(100) },
            SyncSample { t0: ts(1000), t1: ts(1510), t2: ts(1510), t3: ts(1020) },
            SyncSample { t0: ts(2000), t1: ts(2400), t2: ts(2400), t3: ts(2200) },
        ];
        let best = best_offset(&samples).unwrap();
        assert_eq!(best.rtt_us, 20);
        assert_eq!(best.offset_us, 500);
        assert_eq!(best.rounds_used, 3);
    }

    #[test]
    fn inconsistent_sample_ignored() {
        let bad = SyncSample { t0: ts(100), t1: ts(0), t2: ts(500), t3: ts(110) };
        assert_eq!(bad.rtt_us(), None);
        assert!(best_offset(&[bad]).is_none());
    }

    #[test]
    fn session_pairs_by_sequence_and_times_out() {
        let mut seq = SequenceCounters::default();
        let mut s = SyncSession::new(SyncOptions {
            rounds: 2,
            round_timeout: Duration::from_millis(500),
        });
        let r0 = s.poll(ts(0), &mut seq).unwrap();
        assert!(s.poll(ts(100), &mut seq).is_none());
        // Timed out: next round goes out.
        let r1 = s.poll(ts(500_000), &mut seq).unwrap();
        assert_ne!(r0.sequence, r1.sequence);
        let late = answer_time_request(&r0, ts(10), ts(10)).unwrap();
        assert!(!s.on_response(&late, ts(500_010)));
        let resp = answer_time_request(&r1, ts(500_010), ts(500_011)).unwrap();
        assert!(s.on_response(&resp, ts(500_021)));
        assert!(s.is_done());
        let off = s.result().unwrap();
        assert_eq!(off.rounds_used, 1);
        assert_eq!(off.rtt_us, 20);
    }

    #[test]
    fn to_local_inverts_offset() {
        let off = ClockOffset { offset_us: 490, rtt_us: 20, rounds_used: 1 };
        assert_eq!(off.to_local(ts(1500)), ts(1010));
        assert_eq!(off.to_remote(ts(1010)), ts(1500));
        assert!((off.offset_ms() - 0.49).abs() < 1e-12);
    }
}
