//! Documents and plumbing shared between the DT entity loop and the
//! operator-facing gateway: the state snapshot, command parsing and the
//! command queue / latest-snapshot cell pair.

use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dtentity::{finite, AccParams, AccState, ReportSummary, VizFrame};
use crate::dtentity::{build_viz_frame, project_path, PATH_HORIZON_M, PATH_POINTS};
use crate::domain::{EgoState, Timestamp};
use crate::wire::LatencyStats;

pub const DEFAULT_HTTP_ADDR: &str = "127.0.0.1:8080";
pub const STREAM_PERIOD_MS: u64 = 100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStatus {
    pub frames_received: u64,
    pub sequence_gaps: u64,
    pub stale_frames: u64,
    pub decode_errors: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StorageStatus {
    pub written: u64,
    pub dropped: u64,
    pub failures: u64,
}

/// Latest DT state as served on `/api/state` and `/ws/stream`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    #[serde(flatten)]
    pub frame: VizFrame,
    pub clock_offset_ms: f64,
    pub clock_synced: bool,
    pub collection_active: bool,
    pub link: LinkStatus,
    pub storage: StorageStatus,
}

impl Snapshot {
    pub fn boot(acc: &AccState) -> Self {
        let ego = EgoState::at_rest(Timestamp::ZERO);
        let path = project_path(&ego, PATH_HORIZON_M, PATH_POINTS);
        Self {
            frame: build_viz_frame(&ego, &[], &path, &LatencyStats::default(), acc),
            clock_offset_ms: 0.0,
            clock_synced: false,
            collection_active: false,
            link: LinkStatus::default(),
            storage: StorageStatus::default(),
        }
    }

    pub fn with_clock_offset_us(mut self, offset_us: i64, synced: bool) -> Self {
        self.clock_offset_ms = finite(offset_us as f64 / 1_000.0);
        self.clock_synced = synced;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CommandRequest {
    EnableAcc,
    DisableAcc,
    SetSpeed(f64),
    EmergencyBrake,
    StartCollection,
    StopCollection,
    GenerateReport { from_us: Option<u64>, to_us: Option<u64> },
}

impl CommandRequest {
    pub fn kind(&self) -> &'static str {
        match self {
            CommandRequest::EnableAcc => "enable_acc",
            CommandRequest::DisableAcc => "disable_acc",
            CommandRequest::SetSpeed(_) => "set_speed",
            CommandRequest::EmergencyBrake => "emergency_brake",
            CommandRequest::StartCollection => "start_collection",
            CommandRequest::StopCollection => "stop_collection",
            CommandRequest::GenerateReport { .. } => "generate_report",
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            CommandRequest::SetSpeed(v) => Some(*v),
            _ => None,
        }
    }

    /// Build from a kind string and optional value, applying range checks.
    pub fn from_parts(kind: &str, value: Option<f64>, params: &AccParams) -> Result<Self, CommandError> {
        let cmd = match kind {
            "enable_acc" => CommandRequest::EnableAcc,
            "disable_acc" => CommandRequest::DisableAcc,
            "emergency_brake" => CommandRequest::EmergencyBrake,
            "start_collection" => CommandRequest::StartCollection,
            "stop_collection" => CommandRequest::StopCollection,
            "generate_report" => CommandRequest::GenerateReport {
                from_us: None,
                to_us: None,
            },
            "set_speed" => {
                let v = value.ok_or(CommandError::MissingValue("set_speed"))?;
                if !(v.is_finite() && (0.0..=params.v_set_max).contains(&v)) {
                    return Err(CommandError::OutOfRange {
                        value: v,
                        max: params.v_set_max,
                    });
                }
                CommandRequest::SetSpeed(v)
            }
            other => return Err(CommandError::UnknownKind(other.to_string())),
        };
        Ok(cmd)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("malformed command document: {0}")]
    Malformed(String),
    #[error("unknown command kind '{0}'")]
    UnknownKind(String),
    #[error("command '{0}' requires a value")]
    MissingValue(&'static str),
    #[error("value {value} outside [0, {max}]")]
    OutOfRange { value: f64, max: f64 },
    #[error("report range start {from} is after end {to}")]
    InvalidBounds { from: u64, to: u64 },
}

impl CommandError {
    pub fn code(&self) -> &'static str {
        match self {
            CommandError::Malformed(_) => "malformed",
            CommandError::UnknownKind(_) => "unknown_kind",
            CommandError::MissingValue(_) => "missing_value",
            CommandError::OutOfRange { .. } => "out_of_range",
            CommandError::InvalidBounds { .. } => "invalid_bounds",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            CommandError::Malformed(_) => 400,
            CommandError::UnknownKind(_) => 404,
            CommandError::MissingValue(_) => 422,
            CommandError::OutOfRange { .. } => 416,
            CommandError::InvalidBounds { .. } => 409,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandDoc {
    kind: String,
    value: Option<f64>,
    from_us: Option<u64>,
    to_us: Option<u64>,
}

/// Parse and validate a JSON command document.
pub fn handle_command(doc: &str, params: &AccParams) -> Result<CommandRequest, CommandError> {
    let d: CommandDoc = serde_json::from_str(doc).map_err(|e| CommandError::Malformed(e.to_string()))?;
    let cmd = CommandRequest::from_parts(&d.kind, d.value, params)?;
    match cmd {
        CommandRequest::GenerateReport { .. } => report_bounds(d.from_us, d.to_us),
        _ => Ok(cmd),
    }
}

/// Body of `POST /api/report`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRequest {
    pub from_us: Option<u64>,
    pub to_us: Option<u64>,
}

pub fn report_bounds(from_us: Option<u64>, to_us: Option<u64>) -> Result<CommandRequest, CommandError> {
    if let (Some(from), Some(to)) = (from_us, to_us) {
        if from > to {
            return Err(CommandError::InvalidBounds { from, to });
        }
    }
    Ok(CommandRequest::GenerateReport { from_us, to_us })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRows {
    pub ego: usize,
    pub tracks: usize,
}

/// Body of the `POST /api/report` response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub ego_csv: String,
    pub tracks_csv: String,
    pub rows: ReportRows,
}

impl From<&ReportSummary> for ReportResponse {
    fn from(s: &ReportSummary) -> Self {
        Self {
            ego_csv: s.ego_csv.display().to_string(),
            tracks_csv: s.tracks_csv.display().to_string(),
            rows: ReportRows {
                ego: s.ego_rows,
                tracks: s.track_rows,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandReply {
    Accepted,
    Report(ReportSummary),
    Failed(String),
}

#[derive(Debug)]
pub struct GatewayRequest {
    pub command: CommandRequest,
    pub reply: Option<Sender<CommandReply>>,
}

/// Read-mostly cell holding the newest snapshot and its tick number.
#[derive(Debug, Clone)]
pub struct SnapshotCell {
    inner: Arc<RwLock<(u64, Arc<Snapshot>)>>,
}

impl SnapshotCell {
    pub fn new(initial: Snapshot) -> Self {
        Self {
            inner: Arc::new(RwLock::new((0, Arc::new(initial)))),
        }
    }

    pub fn publish(&self, snapshot: Snapshot) {
        let mut g = self.inner.write().unwrap_or_else(|e| e.into_inner());
        g.0 += 1;
        g.1 = Arc::new(snapshot);
    }

    pub fn latest(&self) -> Arc<Snapshot> {
        Arc::clone(&self.inner.read().unwrap_or_else(|e| e.into_inner()).1)
    }

    pub fn tick(&self) -> u64 {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).0
    }
}

/// Gateway side of the DT entity: a command queue and the snapshot cell.
#[derive(Debug, Clone)]
pub struct GatewayLink {
    pub commands: Sender<GatewayRequest>,
    pub snapshots: SnapshotCell,
    pub acc_params: AccParams,
}

impl GatewayLink {
    pub fn new(acc_params: AccParams, initial: Snapshot) -> (Self, Receiver<GatewayRequest>) {
        let (tx, rx) = mpsc::channel();
        (
            Self {
                commands: tx,
                snapshots: SnapshotCell::new(initial),
                acc_params,
            },
            rx,
        )
    }

    /// Queue a command and get a receiver for the entity's reply.
    pub fn submit(&self, command: CommandRequest) -> Result<Receiver<CommandReply>, CommandReply> {
        let (tx, rx) = mpsc::channel();
        self.commands
            .send(GatewayRequest {
                command,
                reply: Some(tx),
            })
            .map_err(|_| CommandReply::Failed("digital twin entity is not running".into()))?;
        Ok(rx)
    }
}
