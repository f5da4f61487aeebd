//! Physical-twin world: vehicle plant, scripted traffic, LiDAR synthesis and
//! the speed PID that turns desired speed into motor commands.

mod lidar;
mod pid;
mod scenario;
mod scene;
mod vehicle;

use thiserror::Error;

pub use lidar::{cast_scan, cast_scan_with, ray_aabb, ray_circle, LidarConfig, LidarScan};
pub use pid::PidController;
pub use scenario::{
    AccSpec, EgoSpec, LeadSpec, NetworkSpec, ObstacleSpec, Scenario, ScenarioError, ScriptedCommand,
};
pub use scene::{Aabb, ActuationInputs, LeadVehicle, Obstacle, Scene, SpeedProfile};
pub use vehicle::{step_vehicle, VehicleParams, VehicleState, A_MAX, C_DRAG, MAX_STEP};

/// Fixed simulation step.
pub const SIM_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step {0} s outside the allowed range")]
    BadTimeStep(f64),
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid speed profile: {0}")]
    BadProfile(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}
