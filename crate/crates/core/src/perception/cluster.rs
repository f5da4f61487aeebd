use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PerceptionError;
use crate::domain::{ObjectClass, Timestamp};
use crate::ptsim::{LidarConfig, LidarScan};

pub const MIN_EXTENT: f64 = 0.05;
/// Largest footprint side still classified as a (1/10-scale) vehicle.
pub const VEHICLE_MAX_EXTENT: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud2D {
    pub timestamp: Timestamp,
    pub points: Vec<(f64, f64)>,
}

/// Polar to Cartesian in the vehicle frame; no-return beams are dropped.
pub fn scan_to_points(scan: &LidarScan, cfg: &LidarConfig) -> Result<PointCloud2D, PerceptionError> {
    let expected = cfg.beam_count();
    if scan.ranges.len() != expected {
        return Err(PerceptionError::BeamCountMismatch {
            expected,
            actual: scan.ranges.len(),
        });
    }
    let points = scan
        .ranges
        .iter()
        .enumerate()
        .filter(|(_, &r)| r < cfg.range_max && r.is_finite())
        .map(|(i, &r)| {
            let th = cfg.beam_angle(i);
            (r * th.cos(), r * th.sin())
        })
        .collect();
    Ok(PointCloud2D {
        timestamp: scan.timestamp,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_indices: Vec<usize>,
    pub centroid: (f64, f64),
    /// Bounding-box (length along x, width along y), floored at 5 cm.
    pub extent: (f64, f64),
}

/// Summaries in ascending cluster-id order; noise is skipped.
pub fn cluster_summary(points: &[(f64, f64)], labels: &[i32]) -> Vec<Cluster> {
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l).or_default().push(i);
        }
    }
    groups
        .into_values()
        .map(|members| {
            let n = members.len() as f64;
            let (mut sx, mut sy) = (0.0, 0.0);
            let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &members {
                let (x, y) = points[i];
                sx += x;
                sy += y;
                min_x = min_x.min(x);
                max_x = max_x.max(x);
                min_y = min_y.min(y);
                max_y = max_y.max(y);
            }
            Cluster {
                member_indices: members,
                centroid: (sx / n, sy / n),
                extent: ((max_x - min_x).max(MIN_EXTENT), (max_y - min_y).max(MIN_EXTENT)),
            }
        })
        .collect()
}

pub fn classify_cluster(extent: (f64, f64)) -> ObjectClass {
    if extent.0.max(extent.1) <= VEHICLE_MAX_EXTENT {
        ObjectClass::Vehicle
    } else {
        ObjectClass::Obstacle
    }
}
