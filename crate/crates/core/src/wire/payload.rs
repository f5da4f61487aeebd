//! Typed payloads carried inside [`MessageEnvelope`]s.

use thiserror::Error;

use super::envelope::{DecodeError, EncodeError, MessageEnvelope, MsgType, decode_message, encode_message};
use crate::domain::{Lifecycle, ObjectClass, Timestamp};

pub const TRACK_RECORD_LEN: usize = 30;
pub const FLAG_EMERGENCY: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error(transparent)]
    Frame(#[from] DecodeError),
    #[error("{msg_type:?} payload has {actual} bytes, expected {expected}")]
    BadLength {
        msg_type: MsgType,
        expected: usize,
        actual: usize,
    },
    #[error("invalid enum byte {0} in track record")]
    BadEnum(u8),
}

/// Wire form of one track; floats are single precision on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRecord {
    pub id: u32,
    pub x: f32,
    pub y: f32,
    pub vx: f32,
    pub vy: f32,
    pub length: f32,
    pub width: f32,
    pub object_class: ObjectClass,
    pub lifecycle: Lifecycle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    EgoState { speed: f32, steering: f32 },
    Tracks(Vec<TrackRecord>),
    SpeedCmd { commanded_speed: f32, emergency: bool },
    TimeReq,
    /// `t1` peer receive time, `t2` peer send time, both on the peer clock.
    TimeResp { t1: Timestamp, t2: Timestamp },
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Payload::EgoState { .. } => MsgType::EgoState,
            Payload::Tracks(_) => MsgType::Tracks,
            Payload::SpeedCmd { .. } => MsgType::SpeedCmd,
            Payload::TimeReq => MsgType::TimeReq,
            Payload::TimeResp { .. } => MsgType::TimeResp,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Payload::EgoState { speed, steering } => {
                out.extend_from_slice(&speed.to_le_bytes());
                out.extend_from_slice(&steering.to_le_bytes());
            }
            Payload::Tracks(tracks) => {
                out.reserve(2 + tracks.len() * TRACK_RECORD_LEN);
                out.extend_from_slice(&(tracks.len() as u16).to_le_bytes());
                for t in tracks {
                    out.extend_from_slice(&t.id.to_le_bytes());
                    for f in [t.x, t.y, t.vx, t.vy, t.length, t.width] {
                        out.extend_from_slice(&f.to_le_bytes());
                    }
                    out.push(match t.object_class {
                        ObjectClass::Vehicle => 0,
                        ObjectClass::Obstacle => 1,
                    });
                    out.push(match t.lifecycle {
                        Lifecycle::Tentative => 0,
                        Lifecycle::Confirmed => 1,
                    });
                }
            }
            Payload::SpeedCmd {
                commanded_speed,
                emergency,
            } => {
                out.extend_from_slice(&commanded_speed.to_le_bytes());
                out.push(if *emergency { FLAG_EMERGENCY } else { 0 });
            }
            Payload::TimeReq => {}
            Payload::TimeResp { t1, t2 } => {
                out.extend_from_slice(&t1.micros().to_le_bytes());
                out.extend_from_slice(&t2.micros().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(msg_type: MsgType, b: &[u8]) -> Result<Self, PayloadError> {
        let need = |expected: usize| {
            if b.len() == expected {
                Ok(())
            } else {
                Err(PayloadError::BadLength {
                    msg_type,
                    expected,
                    actual: b.len(),
                })
            }
        };
        match msg_type {
            MsgType::EgoState => {
                need(8)?;
                Ok(Payload::EgoState {
                    speed: f32_at(b, 0),
                    steering: f32_at(b, 4),
                })
            }
            MsgType::Tracks => {
                if b.len() < 2 {
                    return Err(PayloadError::BadLength {
                        msg_type,
                        expected: 2,
                        actual: b.len(),
                    });
                }
                let count = u16::from_le_bytes([b[0], b[1]]) as usize;
                need(2 + count * TRACK_RECORD_LEN)?;
                let tracks = b[2..]
                    .chunks_exact(TRACK_RECORD_LEN)
                    .map(|r| {
                        let object_class = match r[28] {
                            0 => ObjectClass::Vehicle,
                            1 => ObjectClass::Obstacle,
                            other => return Err(PayloadError::BadEnum(other)),
                        };
                        let lifecycle = match r[29] {
                            0 => Lifecycle::Tentative,
                            1 => Lifecycle::Confirmed,
                            other => return Err(PayloadError::BadEnum(other)),
                        };
                        Ok(TrackRecord {
                            id: u32::from_le_bytes(r[0..4].try_into().expect("4 bytes")),
                            x: f32_at(r, 4),
                            y: f32_at(r, 8),
                            vx: f32_at(r, 12),
                            vy: f32_at(r, 16),
                            length: f32_at(r, 20),
                            width: f32_at(r, 24),
                            object_class,
                            lifecycle,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Payload::Tracks(tracks))
            }
            MsgType::SpeedCmd => {
                need(5)?;
                Ok(Payload::SpeedCmd {
                    commanded_speed: f32_at(b, 0),
                    emergency: b[4] & FLAG_EMERGENCY != 0,
                })
            }
            MsgType::TimeReq => {
                need(0)?;
                Ok(Payload::TimeReq)
            }
            MsgType::TimeResp => {
                need(16)?;
                Ok(Payload::TimeResp {
                    t1: Timestamp(u64::from_le_bytes(b[0..8].try_into().expect("8 bytes"))),
                    t2: Timestamp(u64::from_le_bytes(b[8..16].try_into().expect("8 bytes"))),
                })
            }
        }
    }
}

fn f32_at(b: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

/// A decoded frame with its typed payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub sequence: u32,
    pub send_timestamp: Timestamp,
    pub payload: Payload,
}

impl Message {
    pub fn to_envelope(&self) -> MessageEnvelope {
        MessageEnvelope::new(
            self.payload.msg_type(),
            self.sequence,
            self.send_timestamp,
            self.payload.to_bytes(),
        )
    }

    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        encode_message(&self.to_envelope())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PayloadError> {
        let env = decode_message(bytes)?;
        Self::from_envelope(&env)
    }

    pub fn from_envelope(env: &MessageEnvelope) -> Result<Self, PayloadError> {
        Ok(Message {
            sequence: env.sequence,
            send_timestamp: env.send_timestamp,
            payload: Payload::from_bytes(env.msg_type, &env.payload)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_cmd_payload_bytes() {
        let p = Payload::SpeedCmd {
            commanded_speed: 1.5,
            emergency: false,
        };
        assert_eq!(p.to_bytes(), vec![0x00, 0x00, 0xC0, 0x3F, 0x00]);
        let e = Payload::SpeedCmd {
            commanded_speed: 0.0,
            emergency: true,
        };
        assert_eq!(e.to_bytes()[4], 0x01);
    }

    #[test]
    fn track_record_is_thirty_bytes() {
        let rec = TrackRecord {
            id: 7,
            x: 1.0,
            y: -0.5,
            vx: 0.25,
            vy: 0.0,
            length: 0.1,
            width: 0.2,
            object_class: ObjectClass::Obstacle,
            lifecycle: Lifecycle::Confirmed,
        };
        let bytes = Payload::Tracks(vec![rec, rec]).to_bytes();
        assert_eq!(bytes.len(), 2 + 2 * 30);
        assert_eq!(&bytes[0..2], &[2, 0]);
        assert_eq!(&bytes[2..6], &[7, 0, 0, 0]);
        assert_eq!(bytes[30], 1);
        assert_eq!(bytes[31], 1);
        let back = Payload::from_bytes(MsgType::Tracks, &bytes).unwrap();
        assert_eq!(back, Payload::Tracks(vec![rec, rec]));
    }

    #[test]
    fn time_resp_round_trip() {
        let m = Message {
            sequence: 3,
            send_timestamp: Timestamp(99),
            payload: Payload::TimeResp {
                t1: Timestamp(1500),
                t2: Timestamp(1510),
            },
        };
        let bytes = m.encode().unwrap();
        assert_eq!(bytes.len(), 36);
        assert_eq!(Message::decode(&bytes).unwrap(), m);
    }

    #[test]
    fn payload_length_checked() {
        assert!(matches!(
            Payload::from_bytes(MsgType::EgoState, &[0; 7]),
            Err(PayloadError::BadLength { expected: 8, .. })
        ));
        assert!(matches!(
            Payload::from_bytes(MsgType::Tracks, &[1, 0, 0]),
            Err(PayloadError::BadLength { expected: 32, .. })
        ));
        let mut rec = Payload::Tracks(vec![TrackRecord {
            id: 1,
            x: 0.0,
            y: 0.0,
            vx: 0.0,
            vy: 0.0,
            length: 0.1,
            width: 0.1,
            object_class: ObjectClass::Vehicle,
            lifecycle: Lifecycle::Tentative,
        }])
        .to_bytes();
        rec[30] = 9;
        assert_eq!(
            Payload::from_bytes(MsgType::Tracks, &rec),
            Err(PayloadError::BadEnum(9))
        );
    }
}
