//! Deterministic in-memory link used by the combined runner and the tests.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clock::answer_time_request;
use super::payload::Message;
use super::transport::{Received, Transport};
use crate::domain::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub base_delay_ms: f64,
    /// Extra delay drawn uniformly from `[0, jitter_ms]` per frame.
    pub jitter_ms: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            base_delay_ms: 0.0,
            jitter_ms: 0.0,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Delivery {
    At(Timestamp),
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeliveryRecord {
    pub index: u64,
    pub sent_at: Timestamp,
    pub len: usize,
    pub outcome: Delivery,
}

#[derive(Debug, Clone)]
pub struct DeliveredFrame {
    pub bytes: Vec<u8>,
    pub sent_at: Timestamp,
    pub deliver_at: Timestamp,
}

/// (deliver_at, send index, bytes, sent_at); the first two keep the heap
/// order total and stable.
type Pending = Reverse<(Timestamp, u64, Vec<u8>, Timestamp)>;

/// One-directional lossy, jittery link driven by a seeded RNG. Time is
/// whatever the caller passes in; nothing reads the wall clock.
#[derive(Debug)]
pub struct SimChannel {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Pending>,
    sent: u64,
    log: Vec<DeliveryRecord>,
}

impl SimChannel {
    pub fn new(cfg: ChannelConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            queue: BinaryHeap::new(),
            sent: 0,
            log: Vec::new(),
        }
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn sim_channel_send(&mut self, frame: &[u8], now: Timestamp) -> Delivery {
        // Both draws happen for every frame so the RNG stream does not
        // depend on which frames were dropped.
        let roll: f64 = self.rng.random();
        let jitter_frac: f64 = self.rng.random();
        let index = self.sent;
        self.sent += 1;
        let outcome = if roll < self.cfg.drop_probability {
            Delivery::Dropped
        } else {
            let delay_ms = self.cfg.base_delay_ms + jitter_frac * self.cfg.jitter_ms;
            let at = now.saturating_add_micros((delay_ms * 1_000.0).round().max(0.0) as u64);
            self.queue.push(Reverse((at, index, frame.to_vec(), now)));
            Delivery::At(at)
        };
        self.log.push(DeliveryRecord {
            index,
            sent_at: now,
            len: frame.len(),
            outcome,
        });
        outcome
    }

    pub fn next_delivery(&self) -> Option<Timestamp> {
        self.queue.peek().map(|Reverse((at, ..))| *at)
    }

    /// Pop every frame due at or before `now`, in delivery order.
    pub fn poll(&mut self, now: Timestamp) -> Vec<DeliveredFrame> {
        let mut out = Vec::new();
        while let Some(Reverse((at, ..))) = self.queue.peek() {
            if *at > now {
                break;
            }
            let Reverse((deliver_at, _, bytes, sent_at)) = self.queue.pop().expect("peeked");
            out.push(DeliveredFrame {
                bytes,
                sent_at,
                deliver_at,
            });
        }
        out
    }

    /// Pop the earliest frame if it is due at or before `now`.
    pub fn pop_due(&mut self, now: Timestamp) -> Option<DeliveredFrame> {
        match self.queue.peek() {
            Some(Reverse((at, ..))) if *at <= now => {
                let Reverse((deliver_at, _, bytes, sent_at)) = self.queue.pop().expect("peeked");
                Some(DeliveredFrame {
                    bytes,
                    sent_at,
                    deliver_at,
                })
            }
            _ => None,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn log(&self) -> &[DeliveryRecord] {
        &self.log
    }
}

/// A [`Transport`] whose far end is a simulated time server. Local and peer
/// clocks are offsets from a shared virtual true time, and each direction is
/// its own [`SimChannel`].
#[derive(Debug)]
pub struct SimulatedPeerLink {
    true_now: u64,
    local_offset_us: i64,
    peer_offset_us: i64,
    peer_processing_us: u64,
    to_peer: SimChannel,
    from_peer: SimChannel,
}

impl SimulatedPeerLink {
    pub fn new(
        start_true_us: u64,
        local_offset_us: i64,
        peer_offset_us: i64,
        to_peer: ChannelConfig,
        from_peer: ChannelConfig,
    ) -> Self {
        Self {
            true_now: start_true_us,
            local_offset_us,
            peer_offset_us,
            peer_processing_us: 50,
            to_peer: SimChannel::new(to_peer),
            from_peer: SimChannel::new(from_peer),
        }
    }

    pub fn with_processing_us(mut self, us: u64) -> Self {
        self.peer_processing_us = us;
        self
    }

    /// True offset of the peer relative to the local clock.
    pub fn true_offset_us(&self) -> i64 {
        self.peer_offset_us - self.local_offset_us
    }

    fn peer_handle(&mut self, frame: &DeliveredFrame) {
        let Ok(msg) = Message::decode(&frame.bytes) else {
            return;
        };
        let t1 = frame.deliver_at.offset_by(self.peer_offset_us);
        let t2 = t1.saturating_add_micros(self.peer_processing_us);
        if let Some(resp) = answer_time_request(&msg, t1, t2) {
            let bytes = resp.encode().expect("time response fits");
            let depart = frame.deliver_at.saturating_add_micros(self.peer_processing_us);
            self.from_peer.sim_channel_send(&bytes, depart);
        }
    }
}

impl Transport for SimulatedPeerLink {
    fn now(&self) -> Timestamp {
        Timestamp(self.true_now).offset_by(self.local_offset_us)
    }

    fn send(&mut self, frame: &[u8]) -> io::Result<()> {
        self.to_peer.sim_channel_send(frame, Timestamp(self.true_now));
        Ok(())
    }

    fn recv_until(&mut self, deadline: Timestamp) -> io::Result<Option<Received>> {
        let deadline_true = deadline.offset_by(-self.local_offset_us);
        loop {
            let next_req = self.to_peer.next_delivery();
            let next_resp = self.from_peer.next_delivery();
            let handle_req = match (next_req, next_resp) {
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if handle_req {
                let at = next_req.expect("checked");
                if at > deadline_true {
                    self.true_now = self.true_now.max(deadline_true.micros());
                    return Ok(None);
                }
                for f in self.to_peer.poll(at) {
                    self.peer_handle(&f);
                }
                continue;
            }
            match next_resp {
                Some(at) if at <= deadline_true => {
                    let frame = self.from_peer.pop_due(at).expect("due frame");
                    self.true_now = self.true_now.max(at.micros());
                    return Ok(Some(Received {
                        bytes: frame.bytes,
                        recv_ts: self.now(),
                        from: None,
                    }));
                }
                _ => {
                    self.true_now = self.true_now.max(deadline_true.micros());
                    return Ok(None);
                }
            }
        }
    }
}
