use std::path::PathBuf;
use std::sync::mpsc::Receiver;

use super::{track_from_record, RuntimeError};
use crate::domain::{EgoState, ObjectTrack, Timestamp, STEER_MAX, V_MAX};
use crate::dtentity::{
    acc_step, build_viz_frame, generate_report, project_path, AccParams, AccState, Collector, Storage,
    StorageWriter, ACC_PERIOD_US, PATH_HORIZON_M, PATH_POINTS,
};
use crate::gateway::{
    CommandReply, CommandRequest, GatewayLink, GatewayRequest, LinkStatus, Snapshot, SnapshotCell, StorageStatus,
};
use crate::wire::{
    answer_time_request, ClockOffset, LatencyMonitor, Message, MsgType, Payload, SequenceCounters,
    SequenceTracker, SyncOptions, SyncSession, RESYNC_INTERVAL,
};

/// Tracks older than this are considered gone.
pub const TRACK_STALE_US: u64 = 500_000;
/// Retry interval while no sync has ever succeeded.
pub const SYNC_RETRY_US: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct DtConfig {
    pub acc: AccParams,
    pub set_speed: f64,
    pub acc_enabled: bool,
    pub collect: bool,
    pub report_dir: PathBuf,
    pub sync: SyncOptions,
}

impl DtConfig {
    pub fn new(report_dir: PathBuf) -> Self {
        Self {
            acc: AccParams::default(),
            set_speed: 2.0,
            acc_enabled: false,
            collect: false,
            report_dir,
            sync: SyncOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct EgoReport {
    speed: f64,
    steering: f64,
}

/// The digital twin: ACC, collection, storage, reporting and snapshots.
pub struct DtEntity {
    params: AccParams,
    acc: AccState,
    collector: Collector,
    writer: StorageWriter,
    report_dir: PathBuf,
    sync_opts: SyncOptions,
    sync: Option<SyncSession>,
    offset: Option<ClockOffset>,
    next_sync_at: Option<Timestamp>,
    latency: LatencyMonitor,
    rx: SequenceTracker,
    seq: SequenceCounters,
    ego: Option<EgoReport>,
    tracks: Vec<ObjectTrack>,
    tracks_at: Option<Timestamp>,
    link: LinkStatus,
    next_tick: Option<Timestamp>,
    ticks: u64,
    collection_ticks: u64,
    sync_rounds_completed: u64,
    cell: SnapshotCell,
    commands: Option<Receiver<GatewayRequest>>,
}

impl std::fmt::Debug for DtEntity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DtEntity")
            .field("acc", &self.acc)
            .field("offset", &self.offset)
            .field("ticks", &self.ticks)
            .finish_non_exhaustive()
    }
}

impl DtEntity {
    pub fn new(cfg: DtConfig, storage: Storage) -> Result<Self, RuntimeError> {
        cfg.acc.validate()?;
        let mut acc = AccState::new(0.0);
        acc.set_desired_speed(cfg.set_speed, &cfg.acc)?;
        if cfg.acc_enabled {
            acc.enable();
        }
        let mut collector = Collector::default();
        if cfg.collect {
            collector.start();
        }
        let cell = SnapshotCell::new(Snapshot::boot(&acc));
        Ok(Self {
            params: cfg.acc,
            acc,
            collector,
            writer: StorageWriter::spawn(storage),
            report_dir: cfg.report_dir,
            sync_opts: cfg.sync,
            sync: None,
            offset: None,
            next_sync_at: None,
            latency: LatencyMonitor::default(),
            rx: SequenceTracker::default(),
            seq: SequenceCounters::default(),
            ego: None,
            tracks: Vec::new(),
            tracks_at: None,
            link: LinkStatus::default(),
            next_tick: None,
            ticks: 0,
            collection_ticks: 0,
            sync_rounds_completed: 0,
            cell,
            commands: None,
        })
    }

    /// Create the gateway side of this entity. Commands sent through the
    /// returned link are applied on the next `poll`.
    pub fn gateway_link(&mut self) -> GatewayLink {
        let (link, rx) = GatewayLink::new(self.params, (*self.cell.latest()).clone());
        let link = GatewayLink {
            snapshots: self.cell.clone(),
            ..link
        };
        self.commands = Some(rx);
        link
    }

    pub fn snapshots(&self) -> SnapshotCell {
        self.cell.clone()
    }

    pub fn acc_state(&self) -> AccState {
        self.acc
    }

    pub fn acc_params(&self) -> AccParams {
        self.params
    }

    pub fn clock_offset(&self) -> Option<ClockOffset> {
        self.offset
    }

    pub fn latency(&self) -> &LatencyMonitor {
        &self.latency
    }

    pub fn link_status(&self) -> LinkStatus {
        self.link
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// ACC ticks during which collection was active and an ego state known.
    pub fn collection_ticks(&self) -> u64 {
        self.collection_ticks
    }

    pub fn collection_active(&self) -> bool {
        self.collector.is_active()
    }

    pub fn writer(&self) -> &StorageWriter {
        &self.writer
    }

    /// Flush pending writes and hand back the store.
    pub fn finish(self) -> Storage {
        self.writer.finish()
    }

    pub fn on_frame(&mut self, bytes: &[u8], recv_ts: Timestamp, out: &mut Vec<Vec<u8>>) {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("dt: dropping undecodable frame: {e}");
                self.link.decode_errors += 1;
                return;
            }
        };
        self.link.frames_received += 1;
        match &msg.payload {
            Payload::TimeResp { .. } => {
                if let Some(s) = self.sync.as_mut() {
                    if s.on_response(&msg, recv_ts) {
                        self.sync_rounds_completed += 1;
                    }
                }
                return;
            }
            Payload::TimeReq => {
                if let Some(reply) = answer_time_request(&msg, recv_ts, recv_ts) {
                    if let Ok(b) = reply.encode() {
                        out.push(b);
                    }
                }
                return;
            }
            Payload::SpeedCmd { .. } => return,
            _ => {}
        }
        let msg_type = msg.payload.msg_type();
        let accepted = self.rx.accept(msg_type, msg.sequence);
        self.link.sequence_gaps = self.rx.gaps;
        self.link.stale_frames = self.rx.stale;
        if let Some(offset) = self.offset {
            self.latency.record_latency(msg.send_timestamp, recv_ts, &offset);
        }
        if !accepted {
            return;
        }
        match msg.payload {
            Payload::EgoState { speed, steering } => {
                self.ego = Some(EgoReport {
                    speed: finite_or_zero(f64::from(speed)).clamp(0.0, V_MAX),
                    steering: finite_or_zero(f64::from(steering)).clamp(-STEER_MAX, STEER_MAX),
                });
            }
            Payload::Tracks(records) => {
                self.tracks = records.iter().map(track_from_record).collect();
                self.tracks_at = Some(recv_ts);
            }
            _ => {}
        }
    }

    fn poll_sync(&mut self, now: Timestamp, out: &mut Vec<Vec<u8>>) {
        if self.sync.is_none() && self.next_sync_at.is_none_or(|t| now >= t) {
            self.sync = Some(SyncSession::new(self.sync_opts));
        }
        let Some(session) = self.sync.as_mut() else { return };
        if let Some(req) = session.poll(now, &mut self.seq) {
            if let Ok(b) = req.encode() {
                out.push(b);
            }
        }
        if session.is_done() {
            match session.result() {
                Ok(offset) => {
                    log::info!(
                        "dt: clock offset {:.3} ms (rtt {} us, {} rounds)",
                        offset.offset_ms(),
                        offset.rtt_us,
                        offset.rounds_used
                    );
                    self.offset = Some(offset);
                    self.next_sync_at = Some(now.saturating_add_micros(RESYNC_INTERVAL.as_micros() as u64));
                }
                Err(e) => {
                    log::warn!("dt: {e}");
                    let retry = if self.offset.is_some() {
                        RESYNC_INTERVAL.as_micros() as u64
                    } else {
                        SYNC_RETRY_US
                    };
                    self.next_sync_at = Some(now.saturating_add_micros(retry));
                }
            }
            self.sync = None;
        }
    }

    /// Run everything due at local time `now`; outgoing frames go to `out`.
    pub fn poll(&mut self, now: Timestamp, out: &mut Vec<Vec<u8>>) {
        self.poll_sync(now, out);
        self.drain_gateway(now);
        let due = self.next_tick.is_none_or(|t| now >= t);
        if !due {
            return;
        }
        let next = self.next_tick.map_or(now, |t| t).saturating_add_micros(ACC_PERIOD_US);
        self.next_tick = Some(if next <= now { now.saturating_add_micros(ACC_PERIOD_US) } else { next });
        self.tick(now, out);
    }

    fn drain_gateway(&mut self, now: Timestamp) {
        let Some(rx) = self.commands.as_ref() else { return };
        let pending: Vec<GatewayRequest> = rx.try_iter().collect();
        if pending.is_empty() {
            return;
        }
        let mut replies = Vec::with_capacity(pending.len());
        for req in pending {
            let reply = self.apply_command(req.command, now);
            replies.push((req.reply, reply));
        }
        // Publish before replying.
        self.publish(now);
        for (tx, reply) in replies {
            if let Some(tx) = tx {
                let _ = tx.send(reply);
            }
        }
    }

    /// Apply an operator command. Accepted commands are logged to the
    /// `commands` table.
    pub fn apply_command(&mut self, cmd: CommandRequest, now: Timestamp) -> CommandReply {
        let reply = match cmd {
            CommandRequest::EnableAcc => {
                self.acc.enable();
                CommandReply::Accepted
            }
            CommandRequest::DisableAcc => {
                self.acc.disable();
                CommandReply::Accepted
            }
            CommandRequest::SetSpeed(v) => match self.acc.set_desired_speed(v, &self.params) {
                Ok(()) => CommandReply::Accepted,
                Err(e) => return CommandReply::Failed(e.to_string()),
            },
            CommandRequest::EmergencyBrake => {
                self.acc.emergency_brake();
                CommandReply::Accepted
            }
            CommandRequest::StartCollection => {
                self.collector.start();
                CommandReply::Accepted
            }
            CommandRequest::StopCollection => {
                self.collector.stop();
                CommandReply::Accepted
            }
            CommandRequest::GenerateReport { from_us, to_us } => {
                let from = from_us.unwrap_or(0);
                let to = to_us.unwrap_or(i64::MAX as u64);
                if from > to {
                    return CommandReply::Failed(format!("report range start {from} is after end {to}"));
                }
                let dir = self.report_dir.clone();
                match self.writer.run(move |s| generate_report(s, from, to, &dir)) {
                    Ok(summary) => CommandReply::Report(summary),
                    Err(e) => return CommandReply::Failed(e.to_string()),
                }
            }
        };
        self.writer.submit_command(now.micros(), cmd.kind(), cmd.value());
        reply
    }

    fn current_tracks(&self, now: Timestamp) -> &[ObjectTrack] {
        match self.tracks_at {
            Some(t) if now.micros().saturating_sub(t.micros()) <= TRACK_STALE_US => &self.tracks,
            _ => &[],
        }
    }

    fn ego_state(&self, now: Timestamp) -> EgoState {
        let ego = self.ego.unwrap_or(EgoReport {
            speed: 0.0,
            steering: 0.0,
        });
        EgoState {
            timestamp: now,
            speed: ego.speed,
            steering_angle: ego.steering,
            acc_enabled: self.acc.enabled,
            set_speed: self.acc.set_speed,
            commanded_speed: self.acc.last_command,
        }
    }

    fn tick(&mut self, now: Timestamp, out: &mut Vec<Vec<u8>>) {
        self.ticks += 1;
        let ego = self.ego_state(now);
        let tracks = self.current_tracks(now).to_vec();
        let (cmd, next) = acc_step(&self.acc, &tracks, &ego, &self.params);
        self.acc = next;
        if let Some(cmd) = cmd {
            let msg = Message {
                sequence: self.seq.next(MsgType::SpeedCmd),
                send_timestamp: now,
                payload: Payload::SpeedCmd {
                    commanded_speed: cmd.commanded_speed as f32,
                    emergency: cmd.emergency,
                },
            };
            if let Ok(b) = msg.encode() {
                out.push(b);
            }
        }
        if self.collector.is_active() && self.ego.is_some() {
            let ego = self.ego_state(now);
            match self.collector.collect_sample(&mut self.writer, &ego, &tracks, now.micros()) {
                Ok(true) => self.collection_ticks += 1,
                Ok(false) => {}
                Err(e) => log::warn!("dt: sample not stored: {e}"),
            }
        }
        self.publish(now);
    }

    fn publish(&self, now: Timestamp) {
        let ego = self.ego_state(now);
        let tracks = self.current_tracks(now);
        let path = project_path(&ego, PATH_HORIZON_M, PATH_POINTS);
        let stats = self.writer.stats();
        let frame = build_viz_frame(&ego, tracks, &path, &self.latency.latency_stats(), &self.acc);
        let snapshot = Snapshot {
            frame,
            clock_offset_ms: 0.0,
            clock_synced: false,
            collection_active: self.collector.is_active(),
            link: self.link,
            storage: StorageStatus {
                written: stats.written,
                dropped: stats.dropped,
                failures: stats.failures,
            },
        };
        let snapshot = match self.offset {
            Some(o) => snapshot.with_clock_offset_us(o.offset_us, true),
            None => snapshot,
        };
        self.cell.publish(snapshot);
    }
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}
