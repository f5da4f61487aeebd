//! Time-series CSV export of stored samples.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::storage::Storage;
use super::DtError;

pub const EGO_CSV_HEADER: &str = "ts_us,speed_mps,steering_rad,acc_enabled,set_speed_mps,commanded_speed_mps";
pub const TRACKS_CSV_HEADER: &str = "ts_us,track_id,x_m,y_m,vx_mps,vy_mps,length_m,width_m,class,state";
pub const EGO_CSV_NAME: &str = "ego_state.csv";
pub const TRACKS_CSV_NAME: &str = "tracks.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub ego_csv: PathBuf,
    pub tracks_csv: PathBuf,
    pub ego_rows: usize,
    pub track_rows: usize,
}

fn writer(path: &Path) -> Result<csv::Writer<File>, DtError> {
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn header(w: &mut csv::Writer<File>, line: &str) -> Result<(), DtError> {
    w.write_record(line.split(','))?;
    Ok(())
}

/// Writes `ego_state.csv` and `tracks.csv` into `out_dir` for samples with
/// `ts_us` in `[from_us, to_us]`, overwriting earlier reports.
pub fn generate_report(storage: &Storage, from_us: u64, to_us: u64, out_dir: &Path) -> Result<ReportSummary, DtError> {
    if from_us > to_us {
        return Err(DtError::InvalidRange { from: from_us, to: to_us });
    }
    std::fs::create_dir_all(out_dir)?;
    let from = i64::try_from(from_us).unwrap_or(i64::MAX);
    let to = i64::try_from(to_us).unwrap_or(i64::MAX);

    let ego_csv = out_dir.join(EGO_CSV_NAME);
    let ego = storage.ego_rows(from, to)?;
    let mut w = writer(&ego_csv)?;
    header(&mut w, EGO_CSV_HEADER)?;
    for r in &ego {
        w.write_record([
            r.ts_us.to_string(),
            r.speed.to_string(),
            r.steering.to_string(),
            u8::from(r.acc_enabled).to_string(),
            r.set_speed.to_string(),
            r.commanded_speed.to_string(),
        ])?;
    }
    w.flush()?;

    let tracks_csv = out_dir.join(TRACKS_CSV_NAME);
    let tracks = storage.track_rows(from, to)?;
    let mut w = writer(&tracks_csv)?;
    header(&mut w, TRACKS_CSV_HEADER)?;
    for r in &tracks {
        w.write_record([
            r.ts_us.to_string(),
            r.track_id.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.vx.to_string(),
            r.vy.to_string(),
            r.length.to_string(),
            r.width.to_string(),
            r.class.clone(),
            r.state.clone(),
        ])?;
    }
    w.flush()?;

    Ok(ReportSummary {
        ego_csv,
        tracks_csv,
        ego_rows: ego.len(),
        track_rows: tracks.len(),
    })
}
