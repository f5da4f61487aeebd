use serde::{Deserialize, Serialize};

use super::SimError;
use crate::domain::{Pose2D, STEER_MAX, V_MAX, WHEELBASE};

/// Peak acceleration at full motor command.
pub const A_MAX: f64 = 2.0;
/// Linear drag coefficient (1/s).
pub const C_DRAG: f64 = 0.5;
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub a_max: f64,
    pub c_drag: f64,
    pub v_max: f64,
    pub steer_max: f64,
    pub wheelbase: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            a_max: A_MAX,
            c_drag: C_DRAG,
            v_max: V_MAX,
            steer_max: STEER_MAX,
            wheelbase: WHEELBASE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub speed: f64,
    pub steering_angle: f64,
}

impl VehicleState {
    pub fn new(pose: Pose2D, speed: f64, steering_angle: f64, params: &VehicleParams) -> Result<Self, SimError> {
        if !(0.0..=params.v_max).contains(&speed) {
            return Err(SimError::InvalidState(format!("speed {speed} outside [0, {}]", params.v_max)));
        }
        if !steering_angle.is_finite() || steering_angle.abs() > params.steer_max {
            return Err(SimError::InvalidState(format!(
                "steering {steering_angle} outside +-{}",
                params.steer_max
            )));
        }
        Ok(Self {
            pose,
            speed,
            steering_angle,
        })
    }
}

/// Advance one explicit-Euler step: first-order longitudinal plant plus
/// kinematic bicycle steering. Position and heading use the speed at the
/// start of the step.
pub fn step_vehicle(
    s: &VehicleState,
    motor_command: f64,
    steering_cmd: f64,
    dt: f64,
    params: &VehicleParams,
) -> Result<VehicleState, SimError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(SimError::BadTimeStep(dt));
    }
    if !motor_command.is_finite() || !steering_cmd.is_finite() {
        return Err(SimError::NonFinite);
    }
    let u = motor_command.clamp(-1.0, 1.0);
    let steering = steering_cmd.clamp(-params.steer_max, params.steer_max);

    let accel = u * params.a_max - params.c_drag * s.speed;
    let speed = (s.speed + accel * dt).clamp(0.0, params.v_max);

    let heading = s.pose.heading();
    let mut pose = s.pose;
    pose.x += s.speed * heading.cos() * dt;
    pose.y += s.speed * heading.sin() * dt;
    pose.set_heading(heading + (s.speed / params.wheelbase) * steering.tan() * dt)
        .map_err(|_| SimError::NonFinite)?;

    Ok(VehicleState {
        pose,
        speed,
        steering_angle: steering,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn at_speed(v: f64) -> VehicleState {
        VehicleState {
            pose: Pose2D::default(),
            speed: v,
            steering_angle: 0.0,
        }
    }

    #[test]
    fn euler_speed_step() {
        let p = VehicleParams::default();
        // accel = 2u - 0.5 * 1.0 = 1.0  =>  u = 0.75
        let next = step_vehicle(&at_speed(1.0), 0.75, 0.0, 0.1, &p).unwrap();
        assert_abs_diff_eq!(next.speed, 1.1, epsilon = 1e-12);
    }

    #[test]
    fn braking_at_standstill_stays_zero() {
        let p = VehicleParams::default();
        let next = step_vehicle(&at_speed(0.0), -1.0, 0.0, 0.1, &p).unwrap();
        assert_eq!(next.speed, 0.0);
    }

    #[test]
    fn straight_line_one_second() {
        // Drag-balancing command keeps speed at 1 m/s; ten 0.1 s steps.
        let p = VehicleParams::default();
        let mut s = at_speed(1.0);
        for _ in 0..10 {
            s = step_vehicle(&s, 0.25, 0.0, 0.1, &p).unwrap();
        }
        assert_abs_diff_eq!(s.pose.x, 1.0, epsilon = 1e-12);
        assert_eq!(s.pose.y, 0.0);
        assert_abs_diff_eq!(s.speed, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn turning_changes_heading() {
        let p = VehicleParams::default();
        let mut s = at_speed(1.0);
        s = step_vehicle(&s, 0.25, 0.2, 0.1, &p).unwrap();
        s = step_vehicle(&s, 0.25, 0.2, 0.1, &p).unwrap();
        assert!(s.pose.heading() > 0.0);
        assert!(s.pose.y > 0.0);
    }

    #[test]
    fn bad_time_steps_rejected() {
        let p = VehicleParams::default();
        for dt in [0.0, -0.01, 0.2, f64::NAN] {
            assert!(matches!(step_vehicle(&at_speed(1.0), 0.0, 0.0, dt, &p), Err(SimError::BadTimeStep(_))));
        }
    }

    proptest! {
        #[test]
        fn speed_stays_in_bounds(cmds in proptest::collection::vec((-2.0f64..2.0, -1.0f64..1.0), 1..200)) {
            let p = VehicleParams::default();
            let mut s = at_speed(0.5);
            for (u, steer) in cmds {
                s = step_vehicle(&s, u, steer, 0.01, &p).unwrap();
                prop_assert!(s.speed >= 0.0 && s.speed <= p.v_max);
                prop_assert!(s.steering_angle.abs() <= p.steer_max);
            }
        }

        #[test]
        fn coasting_strictly_decelerates(v0 in 0.01f64..3.0) {
            let p = VehicleParams::default();
            let mut s = at_speed(v0);
            for _ in 0..100 {
                let next = step_vehicle(&s, 0.0, 0.0, 0.01, &p).unwrap();
                prop_assert!(next.speed < s.speed);
                s = next;
            }
        }
    }
}
