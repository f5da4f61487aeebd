//! Offloaded adaptive cruise control: lead selection and a constant
//! time-gap following law with proportional gap regulation.

use serde::{Deserialize, Serialize};

use super::DtError;
use crate::domain::{EgoState, ObjectClass, ObjectTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams {
    pub time_gap: f64,
    pub standstill_dist: f64,
    pub kp_gap: f64,
    pub corridor_half_width: f64,
    pub v_set_max: f64,
}

impl Default for AccParams {
    fn default() -> Self {
        Self {
            time_gap: 1.5,
            standstill_dist: 0.5,
            kp_gap: 0.5,
            corridor_half_width: 0.25,
            v_set_max: 3.0,
        }
    }
}

impl AccParams {
    pub fn validate(&self) -> Result<(), DtError> {
        let fields = [
            ("time_gap", self.time_gap),
            ("standstill_dist", self.standstill_dist),
            ("kp_gap", self.kp_gap),
            ("corridor_half_width", self.corridor_half_width),
            ("v_set_max", self.v_set_max),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(DtError::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.8..=2.2).contains(&self.time_gap) {
            return Err(DtError::InvalidParam(format!(
                "time_gap {} outside [0.8, 2.2] s",
                self.time_gap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccState {
    pub enabled: bool,
    pub set_speed: f64,
    /// Latched until the next explicit enable.
    pub emergency: bool,
    pub last_command: f64,
}

impl AccState {
    pub fn new(set_speed: f64) -> Self {
        Self {
            enabled: false,
            set_speed,
            emergency: false,
            last_command: 0.0,
        }
    }

    pub fn enable(&mut self) {
        self.enabled = true;
        self.emergency = false;
    }

    pub fn disable(&mut self) {
        self.enabled = false;
    }

    /// The set speed survives disable/enable cycles.
    pub fn set_desired_speed(&mut self, v: f64, params: &AccParams) -> Result<(), DtError> {
        if !(v.is_finite() && (0.0..=params.v_set_max).contains(&v)) {
            return Err(DtError::InvalidParam(format!(
                "set speed {v} outside [0, {}]",
                params.v_set_max
            )));
        }
        self.set_speed = v;
        Ok(())
    }

    pub fn emergency_brake(&mut self) {
        self.emergency = true;
        self.last_command = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedCommand {
    pub commanded_speed: f64,
    pub emergency: bool,
}

/// Nearest in-corridor vehicle ahead; ties go to the lower id.
pub fn select_lead(tracks: &[ObjectTrack], params: &AccParams) -> Option<ObjectTrack> {
    tracks
        .iter()
        .filter(|t| t.x > 0.0 && t.y.abs() <= params.corridor_half_width && t.object_class == ObjectClass::Vehicle)
        .min_by(|a, b| a.x.total_cmp(&b.x).then(a.id.cmp(&b.id)))
        .copied()
}

/// `lead.vx` is relative to the ego vehicle.
pub fn acc_following_speed(lead: &ObjectTrack, ego_speed: f64, state: &AccState, params: &AccParams) -> f64 {
    let d = lead.x;
    let d_des = params.standstill_dist + params.time_gap * ego_speed;
    let v_lead = ego_speed + lead.vx;
    let v = v_lead + params.kp_gap * (d - d_des);
    if v.is_nan() {
        return 0.0;
    }
    v.clamp(0.0, state.set_speed.max(0.0))
}

/// One control tick. `None` means ACC is off and nothing is sent.
pub fn acc_step(
    state: &AccState,
    tracks: &[ObjectTrack],
    ego: &EgoState,
    params: &AccParams,
) -> (Option<SpeedCommand>, AccState) {
    let mut next = *state;
    if state.emergency {
        next.last_command = 0.0;
        return (
            Some(SpeedCommand {
                commanded_speed: 0.0,
                emergency: true,
            }),
            next,
        );
    }
    if !state.enabled {
        return (None, next);
    }
    let v = match select_lead(tracks, params) {
        Some(lead) => acc_following_speed(&lead, ego.speed, state, params),
        None => state.set_speed,
    };
    next.last_command = v;
    (
        Some(SpeedCommand {
            commanded_speed: v,
            emergency: false,
        }),
        next,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Lifecycle, Timestamp};
    use approx::assert_abs_diff_eq;

    pub(crate) fn track(id: u32, x: f64, y: f64, vx: f64) -> ObjectTrack {
        ObjectTrack {
            id,
            x,
            y,
            vx,
            vy: 0.0,
            length: 0.05,
            width: 0.27,
            object_class: ObjectClass::Vehicle,
            lifecycle: Lifecycle::Confirmed,
            hits: 3,
            misses: 0,
        }
    }

    fn enabled(set: f64) -> AccState {
        let mut s = AccState::new(set);
        s.enable();
        s
    }

    fn ego(speed: f64) -> EgoState {
        EgoState {
            speed,
            ..EgoState::at_rest(Timestamp(0))
        }
    }

    #[test]
    fn lead_selection() {
        let p = AccParams::default();
        assert_eq!(select_lead(&[], &p), None);
        let lead = select_lead(&[track(1, 2.0, 0.05, 0.0), track(2, 1.5, 1.0, 0.0)], &p).unwrap();
        assert_eq!(lead.id, 1);
        assert_eq!(select_lead(&[track(3, -1.0, 0.0, 0.0)], &p), None);
    }

    #[test]
    fn obstacles_are_not_leads() {
        let mut t = track(1, 1.0, 0.0, 0.0);
        t.object_class = ObjectClass::Obstacle;
        assert_eq!(select_lead(&[t], &AccParams::default()), None);
    }

    #[test]
    fn ties_break_on_id() {
        let p = AccParams::default();
        let a = track(5, 2.0, 0.0, 0.0);
        let b = track(4, 2.0, 0.1, 0.0);
        assert_eq!(select_lead(&[a, b], &p).unwrap().id, 4);
        assert_eq!(select_lead(&[b, a], &p).unwrap().id, 4);
    }

    #[test]
    fn following_law_examples() {
        let p = AccParams::default();
        // Zero gap error: d = d_des = 0.5 + 1.5 * 1.0.
        let s = enabled(2.0);
        assert_abs_diff_eq!(acc_following_speed(&track(1, 2.0, 0.0, 0.0), 1.0, &s, &p), 1.0, epsilon = 1e-12);
        // d = 3, d_des = 2, v_lead = 1 => 1 + 0.5 * 1 = 1.5
        assert_abs_diff_eq!(acc_following_speed(&track(1, 3.0, 0.0, 0.0), 1.0, &s, &p), 1.5, epsilon = 1e-12);
        // Stopped lead at standstill distance.
        assert_eq!(acc_following_speed(&track(1, 0.5, 0.0, 0.0), 0.0, &s, &p), 0.0);
        // Clamp to set speed.
        assert_eq!(acc_following_speed(&track(1, 9.0, 0.0, 0.0), 1.0, &s, &p), 2.0);
    }

    #[test]
    fn step_without_lead_requests_set_speed() {
        let (cmd, next) = acc_step(&enabled(2.0), &[], &ego(0.0), &AccParams::default());
        assert_eq!(cmd.unwrap().commanded_speed, 2.0);
        assert_eq!(next.last_command, 2.0);
    }

    #[test]
    fn emergency_latch() {
        let mut s = enabled(2.0);
        s.emergency_brake();
        let (cmd, next) = acc_step(&s, &[track(1, 9.0, 0.0, 0.0)], &ego(1.0), &AccParams::default());
        assert_eq!(
            cmd,
            Some(SpeedCommand {
                commanded_speed: 0.0,
                emergency: true
            })
        );
        assert!(next.emergency);
        // Disabling does not clear the latch; enabling does.
        let mut s2 = next;
        s2.disable();
        assert!(acc_step(&s2, &[], &ego(0.0), &AccParams::default()).0.unwrap().emergency);
        s2.enable();
        assert!(!s2.emergency);
    }

    #[test]
    fn disabled_sends_nothing() {
        let (cmd, _) = acc_step(&AccState::new(2.0), &[], &ego(1.0), &AccParams::default());
        assert!(cmd.is_none());
    }

    #[test]
    fn set_speed_persists_and_is_validated() {
        let p = AccParams::default();
        let mut s = AccState::new(1.0);
        s.set_desired_speed(1.5, &p).unwrap();
        s.enable();
        s.disable();
        s.enable();
        assert_eq!(s.set_speed, 1.5);
        assert!(s.set_desired_speed(-1.0, &p).is_err());
        assert!(s.set_desired_speed(3.5, &p).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(AccParams::default().validate().is_ok());
        let p = AccParams { time_gap: 3.0, ..AccParams::default() };
        assert!(p.validate().is_err());
        let p = AccParams { kp_gap: 0.0, ..AccParams::default() };
        assert!(p.validate().is_err());
    }
}
