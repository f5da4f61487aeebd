//! JSON scenario files.
//!
//! ```json
//! {
//!   "ego": {"x": 0, "y": 0, "heading": 0, "speed": 1.0},
//!   "lead": {"x": 2.75, "lane_offset": 0, "profile": [[0, 1.0], [5, 1.0], [8, 0.0]],
//!            "length": 0.5, "width": 0.27},
//!   "obstacles": [{"kind": "circle", "x": 4, "y": 1.5, "radius": 0.4}],
//!   "network": {"delay_ms": 20, "jitter_ms": 5, "drop": 0},
//!   "acc": {"set_speed": 2.0, "time_gap": 1.5, "standstill": 0.5, "kp_gap": 0.5},
//!   "seed": 7
//! }
//! ```
//!
//! Distances are meters, speeds m/s, times seconds. Keys beyond the ones
//! above are optional extensions with defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::scene::{Aabb, LeadVehicle, Obstacle, Scene, SpeedProfile};
use super::vehicle::{VehicleParams, VehicleState};
use super::SimError;
use crate::domain::Pose2D;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(#[from] SimError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub speed: f64,
    /// Fixed steering angle held for the whole run.
    #[serde(default)]
    pub steering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeadSpec {
    /// Initial footprint center along the lane.
    #[serde(default = "default_lead_x")]
    pub x: f64,
    #[serde(default)]
    pub lane_offset: f64,
    pub profile: Vec<(f64, f64)>,
    #[serde(default = "default_lead_length")]
    pub length: f64,
    #[serde(default = "default_lead_width")]
    pub width: f64,
}

fn default_lead_x() -> f64 {
    2.75
}
fn default_lead_length() -> f64 {
    0.5
}
fn default_lead_width() -> f64 {
    0.27
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSpec {
    Circle { x: f64, y: f64, radius: f64 },
    Rect { x: f64, y: f64, length: f64, width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub drop: f64,
    /// Overrides for the twin-to-vehicle direction; default mirrors the
    /// vehicle-to-twin values.
    #[serde(default)]
    pub back_delay_ms: Option<f64>,
    #[serde(default)]
    pub back_jitter_ms: Option<f64>,
    /// True offset of the twin entity's clock relative to the vehicle.
    #[serde(default)]
    pub clock_offset_ms: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            delay_ms: 0.0,
            jitter_ms: 0.0,
            drop: 0.0,
            back_delay_ms: None,
            back_jitter_ms: None,
            clock_offset_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccSpec {
    #[serde(default = "default_set_speed")]
    pub set_speed: f64,
    #[serde(default = "default_time_gap")]
    pub time_gap: f64,
    #[serde(default = "default_standstill")]
    pub standstill: f64,
    #[serde(default = "default_kp_gap")]
    pub kp_gap: f64,
    /// ACC engaged at start.
    #[serde(default = "default_true")]
    pub enabled: bool,
}

impl Default for AccSpec {
    fn default() -> Self {
        Self {
            set_speed: default_set_speed(),
            time_gap: default_time_gap(),
            standstill: default_standstill(),
            kp_gap: default_kp_gap(),
            enabled: true,
        }
    }
}

fn default_set_speed() -> f64 {
    2.0
}
fn default_time_gap() -> f64 {
    1.5
}
fn default_standstill() -> f64 {
    0.5
}
fn default_kp_gap() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

/// A remote-management command issued at a fixed sim time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedCommand {
    pub t: f64,
    pub kind: String,
    #[serde(default)]
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub ego: EgoSpec,
    #[serde(default)]
    pub lead: Option<LeadSpec>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub acc: AccSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    #[serde(default)]
    pub commands: Vec<ScriptedCommand>,
}

impl Default for EgoSpec {
    fn default() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 0.0,
            steering: 0.0,
        }
    }
}

fn default_duration() -> f64 {
    60.0
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            ego: EgoSpec::default(),
            lead: None,
            obstacles: Vec::new(),
            network: NetworkSpec::default(),
            acc: AccSpec::default(),
            seed: 0,
            duration_s: default_duration(),
            commands: Vec::new(),
        }
    }
}

impl Scenario {
    pub fn from_json_str(text: &str, origin: &Path) -> Result<Self, ScenarioError> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        sc.build_scene()?;
        if sc.duration_s.is_nan() || sc.duration_s <= 0.0 {
            return Err(SimError::InvalidState("duration_s must be positive".into()).into());
        }
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path)
    }

    pub fn build_scene(&self) -> Result<Scene, SimError> {
        let params = VehicleParams::default();
        let pose = Pose2D::new(self.ego.x, self.ego.y, self.ego.heading).map_err(|_| SimError::NonFinite)?;
        let ego = VehicleState::new(pose, self.ego.speed, self.ego.steering, &params)?;
        let lead = match &self.lead {
            None => None,
            Some(l) => {
                if !(l.length > 0.0 && l.width > 0.0) {
                    return Err(SimError::InvalidState("lead length/width must be positive".into()));
                }
                let profile = SpeedProfile::new(l.profile.clone())?;
                let v0 = profile.speed_at(0.0).min(params.v_max);
                Some(LeadVehicle {
                    state: VehicleState {
                        pose: Pose2D::new(l.x, l.lane_offset, 0.0).map_err(|_| SimError::NonFinite)?,
                        speed: v0,
                        steering_angle: 0.0,
                    },
                    profile,
                    length: l.length,
                    width: l.width,
                })
            }
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| match *o {
                ObstacleSpec::Circle { x, y, radius } if radius > 0.0 => Ok(Obstacle::Circle { x, y, radius }),
                ObstacleSpec::Rect { x, y, length, width } if length > 0.0 && width > 0.0 => {
                    Ok(Obstacle::Rect(Aabb::centered(x, y, length, width)))
                }
                _ => Err(SimError::InvalidState(format!("degenerate obstacle {o:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scene {
            ego,
            lead,
            obstacles,
            params,
        })
    }
}
