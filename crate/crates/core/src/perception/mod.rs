//! On-vehicle data pre-processing: LiDAR scan to points, DBSCAN clustering,
//! and Kalman-filtered multi-object tracking.

mod cluster;
mod dbscan;
mod kalman;
mod tracker;

use thiserror::Error;

pub use cluster::{
    classify_cluster, cluster_summary, scan_to_points, Cluster, PointCloud2D, MIN_EXTENT,
    VEHICLE_MAX_EXTENT,
};
pub use dbscan::{dbscan, NOISE};
pub use kalman::{kf_predict, kf_update, process_noise, KalmanState};
pub use tracker::{KalmanTrack, TrackerParams, TrackerState};

use crate::domain::ObjectTrack;
use crate::ptsim::{LidarConfig, LidarScan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("scan has {actual} beams, config expects {expected}")]
    BeamCountMismatch { expected: usize, actual: usize },
    #[error("innovation covariance is singular")]
    DegenerateUpdate,
    #[error("timestamp {now} precedes previous {last}")]
    TimeWentBackwards {
        last: crate::domain::Timestamp,
        now: crate::domain::Timestamp,
    },
}

/// Full scan-to-tracks pipeline as run on the vehicle.
#[derive(Debug, Clone)]
pub struct Perception {
    pub lidar: LidarConfig,
    pub tracker: TrackerState,
}

impl Perception {
    pub fn new(lidar: LidarConfig, params: TrackerParams) -> Self {
        Self {
            lidar,
            tracker: TrackerState::new(params),
        }
    }

    pub fn process_scan(&mut self, scan: &LidarScan) -> Result<Vec<ObjectTrack>, PerceptionError> {
        let cloud = scan_to_points(scan, &self.lidar)?;
        let p = self.tracker.params;
        let labels = dbscan(&cloud.points, p.eps, p.min_pts);
        let clusters = cluster_summary(&cloud.points, &labels);
        self.tracker.tracker_step(&clusters, scan.timestamp)
    }
}
