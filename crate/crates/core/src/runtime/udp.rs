use std::net::{SocketAddr, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::dt::DtEntity;
use super::pt::PtEntity;
use super::RuntimeError;
use crate::wire::{
    clock_sync, ClockOffset, SequenceCounters, SyncOptions, Transport, UdpEndpoint,
};

const STEP: Duration = Duration::from_millis(10);

fn should_stop(stop: &AtomicBool, started: Instant, duration: Option<Duration>) -> bool {
    stop.load(Ordering::Relaxed) || duration.is_some_and(|d| started.elapsed() >= d)
}

/// Replies to a received frame go back to its sender.
fn reply_all(ep: &mut UdpEndpoint, to: Option<SocketAddr>, out: &mut Vec<Vec<u8>>) {
    let Some(addr) = to.filter(|a| *a != ep.peer()) else {
        return send_all(ep, out);
    };
    for b in out.drain(..) {
        if let Err(e) = ep.send_to(&b, addr) {
            log::debug!("reply to {addr} failed: {e}");
        }
    }
}

fn send_all<T: Transport>(ep: &mut T, out: &mut Vec<Vec<u8>>) {
    for b in out.drain(..) {
        if let Err(e) = ep.send(&b) {
            log::debug!("send failed: {e}");
        }
    }
}

/// Run the physical twin against a UDP peer in real time.
pub fn run_pt_udp(
    mut pt: PtEntity,
    mut ep: UdpEndpoint,
    duration: Option<Duration>,
    stop: Arc<AtomicBool>,
) -> Result<PtEntity, RuntimeError> {
    let started = Instant::now();
    let mut out = Vec::new();
    let mut next = ep.now().saturating_add_micros(STEP.as_micros() as u64);
    while !should_stop(&stop, started, duration) {
        while let Some(rx) = ep.recv_until(next)? {
            pt.on_frame(&rx.bytes, rx.recv_ts, &mut out);
            reply_all(&mut ep, rx.from, &mut out);
        }
        let now = ep.now();
        pt.step(now, &mut out)?;
        send_all(&mut ep, &mut out);
        next = next.saturating_add_micros(STEP.as_micros() as u64);
        if next < now {
            // Fell behind; resume from the present instead of bursting.
            next = now.saturating_add_micros(STEP.as_micros() as u64);
        }
    }
    Ok(pt)
}

/// Run the digital twin against a UDP peer in real time.
pub fn run_dt_udp(
    mut dt: DtEntity,
    mut ep: UdpEndpoint,
    duration: Option<Duration>,
    stop: Arc<AtomicBool>,
) -> Result<DtEntity, RuntimeError> {
    let started = Instant::now();
    let mut out = Vec::new();
    let mut next = ep.now();
    while !should_stop(&stop, started, duration) {
        while let Some(rx) = ep.recv_until(next)? {
            dt.on_frame(&rx.bytes, rx.recv_ts, &mut out);
            reply_all(&mut ep, rx.from, &mut out);
        }
        let now = ep.now();
        dt.poll(now, &mut out);
        send_all(&mut ep, &mut out);
        next = next.saturating_add_micros(STEP.as_micros() as u64);
        if next < now {
            next = now.saturating_add_micros(STEP.as_micros() as u64);
        }
    }
    dt.writer().flush();
    Ok(dt)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub peer: SocketAddr,
    pub offset_ms: f64,
    pub rtt_ms: f64,
    /// Half the best round trip.
    pub one_way_ms: f64,
    pub rounds_used: u32,
    pub within_latency_bound: bool,
}

impl ProbeReport {
    fn from_offset(peer: SocketAddr, o: ClockOffset) -> Self {
        let rtt_ms = o.rtt_us as f64 / 1_000.0;
        Self {
            peer,
            offset_ms: o.offset_ms(),
            rtt_ms,
            one_way_ms: rtt_ms / 2.0,
            rounds_used: o.rounds_used,
            within_latency_bound: rtt_ms / 2.0 <= crate::wire::LATENCY_THRESHOLD_MS,
        }
    }
}

/// One-shot clock sync and latency measurement against a running entity.
pub fn probe(peer: impl ToSocketAddrs, opts: SyncOptions) -> Result<ProbeReport, RuntimeError> {
    let peer = peer
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| RuntimeError::InvalidConfig("peer address did not resolve".into()))?;
    let local: SocketAddr = if peer.is_ipv4() {
        "0.0.0.0:0".parse().expect("literal")
    } else {
        "[::]:0".parse().expect("literal")
    };
    let mut ep = UdpEndpoint::bind(local, peer)?;
    let offset = clock_sync(&mut ep, &mut SequenceCounters::default(), opts)?;
    Ok(ProbeReport::from_offset(peer, offset))
}

