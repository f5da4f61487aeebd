use serde::{Deserialize, Serialize};

use super::SimError;

/// Speed PID producing a normalized motor command. The integral term is
/// clamped so that `ki * integral` stays inside the output bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PidController {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub u_min: f64,
    pub u_max: f64,
    integral: f64,
    prev_error: f64,
}

impl PidController {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self::with_bounds(kp, ki, kd, -1.0, 1.0)
    }

    pub fn with_bounds(kp: f64, ki: f64, kd: f64, u_min: f64, u_max: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            u_min,
            u_max,
            integral: 0.0,
            prev_error: 0.0,
        }
    }

    /// Gains used for the vehicle speed loop.
    pub fn speed_loop() -> Self {
        Self::new(1.0, 1.0, 0.0)
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = 0.0;
    }

    pub fn pid_step(&mut self, setpoint: f64, measured: f64, dt: f64) -> Result<f64, SimError> {
        if !setpoint.is_finite() || !measured.is_finite() || !dt.is_finite() {
            return Err(SimError::NonFinite);
        }
        if dt <= 0.0 {
            return Err(SimError::BadTimeStep(dt));
        }
        let e = setpoint - measured;
        self.integral += e * dt;
        if self.ki > 0.0 {
            self.integral = self.integral.clamp(self.u_min / self.ki, self.u_max / self.ki);
        }
        let derivative = (e - self.prev_error) / dt;
        self.prev_error = e;
        let u = self.kp * e + self.ki * self.integral + self.kd * derivative;
        Ok(u.clamp(self.u_min, self.u_max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn proportional_only() {
        let mut c = PidController::new(1.0, 0.0, 0.0);
        assert_abs_diff_eq!(c.pid_step(1.0, 0.6, 0.1).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn saturates() {
        let mut c = PidController::new(1.0, 0.0, 0.0);
        assert_eq!(c.pid_step(5.0, 0.0, 0.1).unwrap(), 1.0);
        assert_eq!(c.pid_step(-5.0, 0.0, 0.1).unwrap(), -1.0);
    }

    #[test]
    fn zero_error_zero_output() {
        let mut c = PidController::new(1.0, 0.5, 0.1);
        assert_eq!(c.pid_step(1.2, 1.2, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut c = PidController::speed_loop();
        assert!(c.pid_step(f64::NAN, 0.0, 0.1).is_err());
        assert!(c.pid_step(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn integral_unwinds_quickly_after_saturation() {
        let mut c = PidController::new(0.0, 1.0, 0.0);
        for _ in 0..1000 {
            c.pid_step(10.0, 0.0, 0.1).unwrap();
        }
        assert_eq!(c.integral(), 1.0);
        // One step of opposite error already pulls the output below max.
        assert!(c.pid_step(0.0, 1.0, 0.1).unwrap() < 1.0);
    }

    proptest! {
        #[test]
        fn anti_windup_holds(ki in 0.01f64..5.0, err in -10.0f64..10.0, steps in 1usize..500) {
            let mut c = PidController::new(0.0, ki, 0.0);
            for _ in 0..steps {
                let u = c.pid_step(err, 0.0, 0.05).unwrap();
                prop_assert!(u.abs() <= c.u_max + 1e-12);
                prop_assert!(ki * c.integral() >= c.u_min - 1e-12 && ki * c.integral() <= c.u_max + 1e-12);
            }
        }
    }
}
