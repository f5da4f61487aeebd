//! Visualization pre-processing: projected path and scene frames.

use serde::{Deserialize, Serialize};

use super::acc::AccState;
use crate::domain::{EgoState, ObjectClass, ObjectTrack, WHEELBASE};
use crate::wire::LatencyStats;

pub const EGO_LENGTH: f64 = 0.5;
pub const EGO_WIDTH: f64 = 0.27;
pub const STRAIGHT_STEER: f64 = 1e-3;

pub const COLOR_EGO: &str = "green";
pub const COLOR_VEHICLE: &str = "blue";
pub const COLOR_OBSTACLE: &str = "cyan";

/// Path ahead of the rear axle, in the ego frame, for the current steering.
pub fn project_path(ego: &EgoState, horizon_m: f64, n_points: usize) -> Vec<(f64, f64)> {
    let step = horizon_m / n_points as f64;
    let delta = ego.steering_angle;
    if delta.abs() < STRAIGHT_STEER {
        return (1..=n_points).map(|k| (k as f64 * step, 0.0)).collect();
    }
    let r = WHEELBASE / delta.tan();
    (1..=n_points)
        .map(|k| {
            let theta = k as f64 * step / r;
            (r * theta.sin(), r * (1.0 - theta.cos()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizBox {
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub width: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizTrack {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
    pub class: String,
    pub state: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizEgo {
    pub speed: f64,
    pub steering: f64,
    pub acc_enabled: bool,
    pub set_speed: f64,
    pub commanded_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizLatency {
    pub count: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizAcc {
    pub enabled: bool,
    pub set_speed: f64,
    pub emergency: bool,
    pub last_command: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizFrame {
    pub ts_us: u64,
    pub ego: VizEgo,
    pub ego_box: VizBox,
    pub tracks: Vec<VizTrack>,
    pub path: Vec<[f64; 2]>,
    pub latency: VizLatency,
    pub acc: VizAcc,
}

/// Non-finite values become 0 so the JSON stays numeric.
pub(crate) fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

pub fn class_color(class: ObjectClass) -> &'static str {
    match class {
        ObjectClass::Vehicle => COLOR_VEHICLE,
        ObjectClass::Obstacle => COLOR_OBSTACLE,
    }
}

pub fn build_viz_frame(
    ego: &EgoState,
    tracks: &[ObjectTrack],
    path: &[(f64, f64)],
    latency: &LatencyStats,
    acc: &AccState,
) -> VizFrame {
    VizFrame {
        ts_us: ego.timestamp.micros(),
        ego: VizEgo {
            speed: finite(ego.speed),
            steering: finite(ego.steering_angle),
            acc_enabled: acc.enabled,
            set_speed: finite(acc.set_speed),
            commanded_speed: finite(acc.last_command),
        },
        ego_box: VizBox {
            x: EGO_LENGTH / 2.0 - 0.085,
            y: 0.0,
            length: EGO_LENGTH,
            width: EGO_WIDTH,
            color: COLOR_EGO.into(),
        },
        tracks: tracks
            .iter()
            .map(|t| VizTrack {
                id: t.id,
                x: finite(t.x),
                y: finite(t.y),
                vx: finite(t.vx),
                vy: finite(t.vy),
                length: finite(t.length),
                width: finite(t.width),
                class: t.object_class.as_str().into(),
                state: t.lifecycle.as_str().into(),
                color: class_color(t.object_class).into(),
            })
            .collect(),
        path: path.iter().map(|&(x, y)| [finite(x), finite(y)]).collect(),
        latency: VizLatency {
            count: latency.count,
            mean_ms: finite(latency.mean_ms),
            p95_ms: finite(latency.p95_ms),
            max_ms: finite(latency.max_ms),
            violations: latency.violation_count,
        },
        acc: VizAcc {
            enabled: acc.enabled,
            set_speed: finite(acc.set_speed),
            emergency: acc.emergency,
            last_command: finite(acc.last_command),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Lifecycle, Timestamp};
    use approx::assert_abs_diff_eq;

    fn ego(steer: f64) -> EgoState {
        EgoState {
            steering_angle: steer,
            ..EgoState::at_rest(Timestamp(42))
        }
    }

    #[test]
    fn straight_path() {
        let p = project_path(&ego(0.0), 2.0, 20);
        assert_eq!(p.len(), 20);
        for (k, (x, y)) in p.iter().enumerate() {
            assert_abs_diff_eq!(*x, 0.1 * (k + 1) as f64, epsilon = 1e-12);
            assert_eq!(*y, 0.0);
        }
    }

    #[test]
    fn arc_lies_on_circle() {
        let r = 0.33 / 0.3f64.tan();
        assert_abs_diff_eq!(r, 1.067, epsilon = 1e-3);
        for (x, y) in project_path(&ego(0.3), 2.0, 20) {
            assert_abs_diff_eq!(x * x + (y - r) * (y - r), r * r, epsilon = 1e-9);
        }
    }

    #[test]
    fn negative_steering_mirrors() {
        let a = project_path(&ego(0.2), 2.0, 20);
        let b = project_path(&ego(-0.2), 2.0, 20);
        for ((xa, ya), (xb, yb)) in a.iter().zip(&b) {
            assert_abs_diff_eq!(xa, xb, epsilon = 1e-12);
            assert_abs_diff_eq!(*ya, -yb, epsilon = 1e-12);
        }
    }

    #[test]
    fn arc_points_equally_spaced_in_arc_length() {
        let r: f64 = 0.33 / 0.3f64.tan();
        let p = project_path(&ego(0.3), 2.0, 20);
        let (x, y) = p[19];
        // Chord from origin subtends angle 2.0 / r.
        let chord = (x * x + y * y).sqrt();
        assert_abs_diff_eq!(chord, 2.0 * r * (1.0 / r).sin(), epsilon = 1e-9);
    }

    fn track(class: ObjectClass) -> ObjectTrack {
        ObjectTrack {
            id: 1,
            x: 1.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            length: 0.3,
            width: 0.2,
            object_class: class,
            lifecycle: Lifecycle::Confirmed,
            hits: 3,
            misses: 0,
        }
    }

    #[test]
    fn frame_colors() {
        let e = ego(0.0);
        let path = project_path(&e, 2.0, 20);
        let acc = AccState::new(1.0);
        let f = build_viz_frame(&e, &[], &path, &LatencyStats::default(), &acc);
        assert_eq!(f.ego_box.color, "green");
        assert!(f.tracks.is_empty());
        assert_eq!(f.path.len(), 20);
        let f = build_viz_frame(
            &e,
            &[track(ObjectClass::Vehicle), track(ObjectClass::Obstacle)],
            &path,
            &LatencyStats::default(),
            &acc,
        );
        assert_eq!(f.tracks[0].color, "blue");
        assert_eq!(f.tracks[1].color, "cyan");
        assert_eq!(f.ts_us, 42);
    }

    #[test]
    fn non_finite_values_are_sanitized() {
        let mut t = track(ObjectClass::Vehicle);
        t.vx = f64::NAN;
        let f = build_viz_frame(&ego(0.0), &[t], &[], &LatencyStats::default(), &AccState::new(1.0));
        assert_eq!(f.tracks[0].vx, 0.0);
        assert!(serde_json::to_string(&f).unwrap().find("null").is_none());
    }
}
