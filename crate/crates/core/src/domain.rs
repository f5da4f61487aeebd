//! Shared value types and small geometry/time helpers.
//!
//! Units are SI throughout: meters, m/s, radians, microseconds. The vehicle
//! frame has x forward, y left, origin at the rear-axle center.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default top speed of the 1/10-scale vehicle.
pub const V_MAX: f64 = 3.0;
/// Default steering limit.
pub const STEER_MAX: f64 = 0.35;
/// Wheelbase used by the bicycle model and path projection.
pub const WHEELBASE: f64 = 0.33;
/// Hits required before a track is reported as confirmed.
pub const CONFIRM_HITS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("non-finite value for {0}")]
    NonFinite(&'static str),
    #[error("invalid range: lo {lo} > hi {hi}")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("{field} = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("confirmed track {id} has only {hits} hits")]
    UnconfirmedHits { id: u32, hits: u32 },
    #[error("track id must be positive")]
    ZeroTrackId,
}

/// Microseconds since the Unix epoch on some entity's clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(us: u64) -> Self {
        Timestamp(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        Timestamp(ms * 1_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e6).round().max(0.0) as u64)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub const fn saturating_add_micros(self, us: u64) -> Self {
        Timestamp(self.0.saturating_add(us))
    }

    /// Shift by a signed number of microseconds, saturating at zero.
    pub fn offset_by(self, us: i64) -> Self {
        Timestamp(self.0.saturating_add_signed(us))
    }

    /// Signed difference `self - earlier` in microseconds.
    pub fn signed_diff(self, earlier: Timestamp) -> i64 {
        self.0 as i64 - earlier.0 as i64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Planar pose. The heading is kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Result<Self, DomainError> {
        Ok(Self {
            x,
            y,
            heading: wrap_angle(heading)?,
        })
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn set_heading(&mut self, heading: f64) -> Result<(), DomainError> {
        self.heading = wrap_angle(heading)?;
        Ok(())
    }
}

/// Reduce an angle to (-pi, pi].
pub fn wrap_angle(theta: f64) -> Result<f64, DomainError> {
    if !theta.is_finite() {
        return Err(DomainError::NonFinite("theta"));
    }
    if theta > -PI && theta <= PI {
        return Ok(theta);
    }
    let two_pi = 2.0 * PI;
    // rem_euclid lands in [0, 2pi); shift into (-pi, pi].
    let mut r = (theta + PI).rem_euclid(two_pi) - PI;
    if r <= -PI {
        r += two_pi;
    }
    Ok(r)
}

pub fn clamp(v: f64, lo: f64, hi: f64) -> Result<f64, DomainError> {
    if lo > hi || lo.is_nan() || hi.is_nan() {
        return Err(DomainError::InvalidRange { lo, hi });
    }
    Ok(v.max(lo).min(hi))
}

pub(crate) fn check_range(
    field: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
) -> Result<f64, DomainError> {
    if !value.is_finite() {
        return Err(DomainError::NonFinite(field));
    }
    if value < lo || value > hi {
        return Err(DomainError::OutOfRange {
            field,
            value,
            lo,
            hi,
        });
    }
    Ok(value)
}

/// Ego vehicle state as seen by the twin entity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub timestamp: Timestamp,
    pub speed: f64,
    pub steering_angle: f64,
    pub acc_enabled: bool,
    pub set_speed: f64,
    pub commanded_speed: f64,
}

impl EgoState {
    pub fn new(
        timestamp: Timestamp,
        speed: f64,
        steering_angle: f64,
        acc_enabled: bool,
        set_speed: f64,
        commanded_speed: f64,
    ) -> Result<Self, DomainError> {
        Ok(Self {
            timestamp,
            speed: check_range("speed", speed, 0.0, V_MAX)?,
            steering_angle: check_range("steering_angle", steering_angle, -STEER_MAX, STEER_MAX)?,
            acc_enabled,
            set_speed: check_range("set_speed", set_speed, 0.0, f64::MAX)?,
            commanded_speed: check_range("commanded_speed", commanded_speed, 0.0, f64::MAX)?,
        })
    }

    pub fn at_rest(timestamp: Timestamp) -> Self {
        Self {
            timestamp,
            speed: 0.0,
            steering_angle: 0.0,
            acc_enabled: false,
            set_speed: 0.0,
            commanded_speed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectClass {
    Vehicle,
    Obstacle,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "Vehicle",
            ObjectClass::Obstacle => "Obstacle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lifecycle {
    Tentative,
    Confirmed,
}

impl Lifecycle {
    pub fn as_str(self) -> &'static str {
        match self {
            Lifecycle::Tentative => "Tentative",
            Lifecycle::Confirmed => "Confirmed",
        }
    }
}

/// A tracked object in the ego vehicle frame. Velocities are relative to
/// the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectTrack {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub length: f64,
    pub width: f64,
    pub object_class: ObjectClass,
    pub lifecycle: Lifecycle,
    pub hits: u32,
    pub misses: u32,
}

impl ObjectTrack {
    /// Check the lifecycle and id invariants.
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.id == 0 {
            return Err(DomainError::ZeroTrackId);
        }
        check_range("length", self.length, f64::MIN_POSITIVE, f64::MAX)?;
        check_range("width", self.width, f64::MIN_POSITIVE, f64::MAX)?;
        if self.lifecycle == Lifecycle::Confirmed && self.hits < CONFIRM_HITS {
            return Err(DomainError::UnconfirmedHits {
                id: self.id,
                hits: self.hits,
            });
        }
        Ok(())
    }
}
