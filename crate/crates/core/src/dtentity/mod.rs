//! The digital-twin entity's services: offloaded ACC, data collection and
//! storage, report generation and visualization pre-processing.

mod acc;
mod report;
mod storage;
mod viz;

use std::path::PathBuf;

use thiserror::Error;

pub use acc::{acc_following_speed, acc_step, select_lead, AccParams, AccState, SpeedCommand};
pub use report::{generate_report, ReportSummary, EGO_CSV_HEADER, EGO_CSV_NAME, TRACKS_CSV_HEADER, TRACKS_CSV_NAME};
pub use storage::{
    class_from_str, lifecycle_from_str, Collector, CommandRow, EgoRow, SampleSink, Storage, StorageWriter, Table,
    TrackRow, WriterStats, SCHEMA, WRITE_QUEUE_CAPACITY,
};
pub use viz::{
    build_viz_frame, class_color, project_path, VizAcc, VizBox, VizEgo, VizFrame, VizLatency, VizTrack, COLOR_EGO,
    COLOR_OBSTACLE, COLOR_VEHICLE, EGO_LENGTH, EGO_WIDTH,
};
pub(crate) use viz::finite;

pub const ACC_PERIOD_US: u64 = 100_000;
pub const PATH_HORIZON_M: f64 = 2.0;
pub const PATH_POINTS: usize = 20;

#[derive(Debug, Error)]
pub enum DtError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("sample timestamp {now} not after previous {last}")]
    NonMonotonic { last: u64, now: u64 },
    #[error("report range start {from} is after end {to}")]
    InvalidRange { from: u64, to: u64 },
    #[error("no data store at {}", .0.display())]
    MissingStore(PathBuf),
    #[error("storage: {0}")]
    Sql(#[from] rusqlite::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
