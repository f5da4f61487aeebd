//! Constant-velocity Kalman filter over `[x, y, vx, vy]`.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use super::PerceptionError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KalmanState {
    pub fn new(mean: Vector4<f64>, cov: Matrix4<f64>) -> Self {
        Self { mean, cov }
    }

    /// Position from a measurement, zero velocity with variance `vel_var`.
    pub fn from_measurement(pos: (f64, f64), meas_sigma: f64, vel_var: f64) -> Self {
        let r = meas_sigma * meas_sigma;
        Self {
            mean: Vector4::new(pos.0, pos.1, 0.0, 0.0),
            cov: Matrix4::from_diagonal(&Vector4::new(r, r, vel_var, vel_var)),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[2], self.mean[3])
    }
}

/// White-acceleration process noise for one CV step.
pub fn process_noise(dt: f64, sigma_a: f64) -> Matrix4<f64> {
    let q = sigma_a * sigma_a;
    let (dt2, dt3, dt4) = (dt * dt, dt * dt * dt, dt * dt * dt * dt);
    let (a, b, c) = (dt4 / 4.0 * q, dt3 / 2.0 * q, dt2 * q);
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    )
}

pub fn kf_predict(s: &KalmanState, dt: f64, sigma_a: f64) -> KalmanState {
    let f = Matrix4::new(
        1.0, 0.0, dt, 0.0, //
        0.0, 1.0, 0.0, dt, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let cov = f * s.cov * f.transpose() + process_noise(dt, sigma_a);
    KalmanState {
        mean: f * s.mean,
        cov: symmetrize(&cov),
    }
}

/// Position-only update (Joseph form), posterior covariance symmetrized.
pub fn kf_update(s: &KalmanState, z: (f64, f64), meas_sigma: f64) -> Result<KalmanState, PerceptionError> {
    let h = Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    );
    let r = Matrix2::identity() * (meas_sigma * meas_sigma);
    let innovation = Vector2::new(z.0, z.1) - h * s.mean;
    let s_mat = h * s.cov * h.transpose() + r;
    let s_inv = s_mat.try_inverse().ok_or(PerceptionError::DegenerateUpdate)?;
    if !s_inv.iter().all(|v| v.is_finite()) {
        return Err(PerceptionError::DegenerateUpdate);
    }
    let k = s.cov * h.transpose() * s_inv;
    let i_kh = Matrix4::identity() - k * h;
    let cov = i_kh * s.cov * i_kh.transpose() + k * r * k.transpose();
    Ok(KalmanState {
        mean: s.mean + k * innovation,
        cov: symmetrize(&cov),
    })
}

fn symmetrize(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
