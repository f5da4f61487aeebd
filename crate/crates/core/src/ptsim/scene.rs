use serde::{Deserialize, Serialize};

use super::vehicle::{step_vehicle, VehicleParams, VehicleState};
use super::SimError;
use crate::domain::Pose2D;

/// Piecewise-linear time to speed map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    points: Vec<(f64, f64)>,
}

impl SpeedProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SimError> {
        if points.is_empty() {
            return Err(SimError::BadProfile("profile is empty".into()));
        }
        for (i, &(t, v)) in points.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() || v < 0.0 {
                return Err(SimError::BadProfile(format!("point {i} ({t}, {v}) invalid")));
            }
            if i > 0 && t <= points[i - 1].0 {
                return Err(SimError::BadProfile(format!("time at point {i} not increasing")));
            }
        }
        Ok(Self { points })
    }

    pub fn constant(speed: f64) -> Self {
        Self {
            points: vec![(0.0, speed.max(0.0))],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let first = self.points[0];
        if t <= first.0 {
            return first.1;
        }
        for w in self.points.windows(2) {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t <= t1 {
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
            }
        }
        self.points[self.points.len() - 1].1
    }
}

/// Scripted vehicle driving straight along +x in the ego's lane. `state.pose`
/// is the footprint center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadVehicle {
    pub state: VehicleState,
    pub profile: SpeedProfile,
    pub length: f64,
    pub width: f64,
}

impl LeadVehicle {
    pub fn footprint(&self) -> Aabb {
        Aabb::centered(self.state.pose.x, self.state.pose.y, self.length, self.width)
    }

    pub fn rear_x(&self) -> f64 {
        self.state.pose.x - self.length / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Aabb {
    pub fn centered(cx: f64, cy: f64, length: f64, width: f64) -> Self {
        Self {
            min_x: cx - length / 2.0,
            max_x: cx + length / 2.0,
            min_y: cy - width / 2.0,
            max_y: cy + width / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Obstacle {
    Circle { x: f64, y: f64, radius: f64 },
    Rect(Aabb),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub ego: VehicleState,
    pub lead: Option<LeadVehicle>,
    pub obstacles: Vec<Obstacle>,
    pub params: VehicleParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuationInputs {
    pub motor_command: f64,
    pub steering_cmd: f64,
}

impl Scene {
    pub fn empty() -> Self {
        Self {
            ego: VehicleState::default(),
            lead: None,
            obstacles: Vec::new(),
            params: VehicleParams::default(),
        }
    }

    /// Distance along x from the ego reference point (sensor origin) to the
    /// lead vehicle's rear face.
    pub fn lead_gap(&self) -> Option<f64> {
        self.lead.as_ref().map(|l| l.rear_x() - self.ego.pose.x)
    }

    pub fn step_world(&self, t: f64, dt: f64, inputs: ActuationInputs) -> Result<Scene, SimError> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(SimError::BadTimeStep(dt));
        }
        let mut next = self.clone();
        if let Some(lead) = next.lead.as_mut() {
            let v = lead.profile.speed_at(t).min(self.params.v_max);
            lead.state.speed = v;
            lead.state.pose = Pose2D::new(lead.state.pose.x + v * dt, lead.state.pose.y, 0.0)
                .map_err(|_| SimError::NonFinite)?;
        }
        next.ego = step_vehicle(&self.ego, inputs.motor_command, inputs.steering_cmd, dt, &self.params)?;
        Ok(next)
    }
}
