use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{record_from_track, RuntimeError};
use crate::domain::Timestamp;
use crate::perception::{Perception, TrackerParams};
use crate::ptsim::{cast_scan_with, ActuationInputs, LidarConfig, PidController, Scenario, Scene, SIM_DT};
use crate::wire::{answer_time_request, Message, MsgType, Payload, SequenceCounters, SequenceTracker};

/// No SPEED_CMD for this long and the vehicle coasts.
pub const WATCHDOG_US: u64 = 500_000;
/// Physics steps between TRACKS frames (10 Hz).
pub const TRACKS_EVERY: u64 = 10;
/// Physics steps between EGO_STATE frames (20 Hz).
pub const EGO_EVERY: u64 = 5;

/// The physical twin: world simulation, on-board perception and actuation.
#[derive(Debug)]
pub struct PtEntity {
    scene: Scene,
    perception: Perception,
    pid: PidController,
    rng: ChaCha8Rng,
    steering_cmd: f64,
    setpoint: f64,
    emergency: bool,
    last_cmd_at: Option<Timestamp>,
    seq: SequenceCounters,
    rx: SequenceTracker,
    steps: u64,
    last_motor: f64,
    pub decode_errors: u64,
    pub perception_errors: u64,
}

impl PtEntity {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, RuntimeError> {
        Ok(Self {
            scene: scenario.build_scene()?,
            perception: Perception::new(LidarConfig::default(), TrackerParams::default()),
            pid: PidController::speed_loop(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            steering_cmd: scenario.ego.steering,
            setpoint: 0.0,
            emergency: false,
            last_cmd_at: None,
            seq: SequenceCounters::default(),
            rx: SequenceTracker::default(),
            steps: 0,
            last_motor: 0.0,
            decode_errors: 0,
            perception_errors: 0,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn sim_time(&self) -> f64 {
        self.steps as f64 * SIM_DT
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn setpoint(&self) -> f64 {
        self.setpoint
    }

    pub fn last_motor(&self) -> f64 {
        self.last_motor
    }

    /// Handle a frame received at local time `recv_ts`; replies go to `out`.
    pub fn on_frame(&mut self, bytes: &[u8], recv_ts: Timestamp, out: &mut Vec<Vec<u8>>) {
        let msg = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => {
                log::debug!("pt: dropping undecodable frame: {e}");
                self.decode_errors += 1;
                return;
            }
        };
        match msg.payload {
            Payload::TimeReq => {
                if let Some(reply) = answer_time_request(&msg, recv_ts, recv_ts) {
                    if let Ok(bytes) = reply.encode() {
                        out.push(bytes);
                    }
                }
            }
            Payload::SpeedCmd {
                commanded_speed,
                emergency,
            } => {
                if !self.rx.accept(MsgType::SpeedCmd, msg.sequence) {
                    return;
                }
                let v = f64::from(commanded_speed);
                self.setpoint = if v.is_finite() {
                    v.clamp(0.0, self.scene.params.v_max)
                } else {
                    0.0
                };
                self.emergency = emergency;
                self.last_cmd_at = Some(recv_ts);
            }
            _ => {}
        }
    }

    fn motor_command(&mut self, now: Timestamp) -> Result<f64, RuntimeError> {
        let fresh = self
            .last_cmd_at
            .is_some_and(|t| now.micros().saturating_sub(t.micros()) <= WATCHDOG_US);
        if fresh && self.emergency {
            self.pid.reset();
            return Ok(-1.0);
        }
        if !fresh {
            self.pid.reset();
            return Ok(0.0);
        }
        Ok(self.pid.pid_step(self.setpoint, self.scene.ego.speed, SIM_DT)?)
    }

    /// Advance one physics step. `now` is the local time at the end of the
    /// step; telemetry due at that instant is appended to `out`.
    pub fn step(&mut self, now: Timestamp, out: &mut Vec<Vec<u8>>) -> Result<(), RuntimeError> {
        let motor = self.motor_command(now)?;
        self.last_motor = motor;
        self.scene = self.scene.step_world(
            self.sim_time(),
            SIM_DT,
            ActuationInputs {
                motor_command: motor,
                steering_cmd: self.steering_cmd,
            },
        )?;
        self.steps += 1;

        if self.steps.is_multiple_of(EGO_EVERY) {
            let msg = Message {
                sequence: self.seq.next(MsgType::EgoState),
                send_timestamp: now,
                payload: Payload::EgoState {
                    speed: self.scene.ego.speed as f32,
                    steering: self.scene.ego.steering_angle as f32,
                },
            };
            out.push(msg.encode()?);
        }
        if self.steps.is_multiple_of(TRACKS_EVERY) {
            let mut scan = cast_scan_with(&self.scene, &self.perception.lidar, &mut self.rng);
            scan.timestamp = now;
            let tracks = match self.perception.process_scan(&scan) {
                Ok(t) => t,
                Err(e) => {
                    log::warn!("pt: perception failed: {e}");
                    self.perception_errors += 1;
                    Vec::new()
                }
            };
            let msg = Message {
                sequence: self.seq.next(MsgType::Tracks),
                send_timestamp: now,
                payload: Payload::Tracks(tracks.iter().map(record_from_track).collect()),
            };
            out.push(msg.encode()?);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario() -> Scenario {
        Scenario::from_json_str(r#"{"ego": {"speed": 1.0}}"#, std::path::Path::new("t.json")).unwrap()
    }

    fn ts(ms: u64) -> Timestamp {
        Timestamp::from_millis(ms)
    }

    #[test]
    fn telemetry_rates() {
        let mut pt = PtEntity::new(&scenario(), 1).unwrap();
        let mut out = Vec::new();
        for k in 1..=100 {
            pt.step(ts(10 * k), &mut out).unwrap();
        }
        let types: Vec<_> = out.iter().map(|b| Message::decode(b).unwrap().payload.msg_type()).collect();
        assert_eq!(types.iter().filter(|t| **t == MsgType::EgoState).count(), 20);
        assert_eq!(types.iter().filter(|t| **t == MsgType::Tracks).count(), 10);
    }

    #[test]
    fn answers_time_requests() {
        let mut pt = PtEntity::new(&scenario(), 1).unwrap();
        let req = Message {
            sequence: 4,
            send_timestamp: ts(1),
            payload: Payload::TimeReq,
        };
        let mut out = Vec::new();
        pt.on_frame(&req.encode().unwrap(), ts(7), &mut out);
        let resp = Message::decode(&out[0]).unwrap();
        assert_eq!(resp.sequence, 4);
        assert_eq!(resp.payload, Payload::TimeResp { t1: ts(7), t2: ts(7) });
    }

    #[test]
    fn watchdog_coasts_without_commands() {
        let mut pt = PtEntity::new(&scenario(), 1).unwrap();
        let mut out = Vec::new();
        let cmd = Message {
            sequence: 0,
            send_timestamp: ts(0),
            payload: Payload::SpeedCmd {
                commanded_speed: 2.0,
                emergency: false,
            },
        };
        pt.on_frame(&cmd.encode().unwrap(), ts(0), &mut out);
        pt.step(ts(10), &mut out).unwrap();
        assert!(pt.last_motor() > 0.0);
        for k in 2..=60 {
            pt.step(ts(10 * k), &mut out).unwrap();
        }
        assert_eq!(pt.last_motor(), 0.0);
    }

    #[test]
    fn emergency_brakes_fully() {
        let mut pt = PtEntity::new(&scenario(), 1).unwrap();
        let mut out = Vec::new();
        let cmd = Message {
            sequence: 0,
            send_timestamp: ts(0),
            payload: Payload::SpeedCmd {
                commanded_speed: 0.0,
                emergency: true,
            },
        };
        pt.on_frame(&cmd.encode().unwrap(), ts(0), &mut out);
        pt.step(ts(10), &mut out).unwrap();
        assert_eq!(pt.last_motor(), -1.0);
    }

    #[test]
    fn stale_speed_commands_ignored() {
        let mut pt = PtEntity::new(&scenario(), 1).unwrap();
        let mut out = Vec::new();
        let cmd = |seq, v| Message {
            sequence: seq,
            send_timestamp: ts(0),
            payload: Payload::SpeedCmd {
                commanded_speed: v,
                emergency: false,
            },
        };
        pt.on_frame(&cmd(5, 1.0).encode().unwrap(), ts(1), &mut out);
        pt.on_frame(&cmd(4, 2.0).encode().unwrap(), ts(2), &mut out);
        assert_eq!(pt.setpoint(), 1.0);
    }
}
