//! Entity loops and the ways of running them: one deterministic process over
//! simulated channels, or separate processes over UDP.

mod combined;
mod dt;
mod pt;
mod udp;

use thiserror::Error;

pub use combined::{acc_params, run_combined, CombinedRun, RunOptions, RunSummary, TracePoint, REPORT_DIR, START_US, STORE_FILE};
pub use dt::{DtConfig, DtEntity, SYNC_RETRY_US, TRACK_STALE_US};
pub use pt::{PtEntity, EGO_EVERY, TRACKS_EVERY, WATCHDOG_US};
pub use udp::{probe, run_dt_udp, run_pt_udp, ProbeReport};

use crate::domain::{ObjectTrack, CONFIRM_HITS};
use crate::dtentity::DtError;
use crate::gateway::CommandError;
use crate::ptsim::{ScenarioError, SimError};
use crate::wire::{EncodeError, SyncError, TrackRecord};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dt(#[from] DtError),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Sync(#[from] SyncError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub fn record_from_track(t: &ObjectTrack) -> TrackRecord {
    TrackRecord {
        id: t.id,
        x: t.x as f32,
        y: t.y as f32,
        vx: t.vx as f32,
        vy: t.vy as f32,
        length: t.length as f32,
        width: t.width as f32,
        object_class: t.object_class,
        lifecycle: t.lifecycle,
    }
}

/// Hit and miss counts do not travel on the wire; a received Confirmed
/// track is given the minimum hit count consistent with its state.
pub fn track_from_record(r: &TrackRecord) -> ObjectTrack {
    let hits = match r.lifecycle {
        crate::domain::Lifecycle::Confirmed => CONFIRM_HITS,
        crate::domain::Lifecycle::Tentative => 1,
    };
    ObjectTrack {
        id: r.id,
        x: f64::from(r.x),
        y: f64::from(r.y),
        vx: f64::from(r.vx),
        vy: f64::from(r.vy),
        length: f64::from(r.length),
        width: f64::from(r.width),
        object_class: r.object_class,
        lifecycle: r.lifecycle,
        hits,
        misses: 0,
    }
}
