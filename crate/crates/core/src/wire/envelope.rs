//! Binary frame layout shared by every entity.
//!
//! ```text
//! 0..4   magic "DT01"
//! 4      version (1)
//! 5      msg_type
//! 6..8   payload_len  u16 LE
//! 8..12  sequence     u32 LE
//! 12..20 send_timestamp (us) u64 LE
//! 20..   payload
//! ```

use thiserror::Error;

use crate::domain::Timestamp;

pub const MAGIC: [u8; 4] = *b"DT01";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 20;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    EgoState = 0x01,
    Tracks = 0x02,
    SpeedCmd = 0x03,
    TimeReq = 0x04,
    TimeResp = 0x05,
}

impl MsgType {
    pub const ALL: [MsgType; 5] = [
        MsgType::EgoState,
        MsgType::Tracks,
        MsgType::SpeedCmd,
        MsgType::TimeReq,
        MsgType::TimeResp,
    ];

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(MsgType::EgoState),
            0x02 => Some(MsgType::Tracks),
            0x03 => Some(MsgType::SpeedCmd),
            0x04 => Some(MsgType::TimeReq),
            0x05 => Some(MsgType::TimeResp),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 65535-byte limit")]
    PayloadTooLarge(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    /// Magic or version bytes do not identify a frame of this protocol.
    #[error("bad magic or version")]
    BadMagic,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    /// Fewer (or more) bytes than the header says.
    #[error("frame length mismatch: expected {expected} bytes, got {actual}")]
    TruncatedFrame { expected: usize, actual: usize },
}

/// One framed message. `payload_len` is derived from `payload`, so the
/// length invariant cannot be broken by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub version: u8,
    pub msg_type: MsgType,
    pub sequence: u32,
    pub send_timestamp: Timestamp,
    pub payload: Vec<u8>,
}

impl MessageEnvelope {
    pub fn new(msg_type: MsgType, sequence: u32, send_timestamp: Timestamp, payload: Vec<u8>) -> Self {
        Self {
            version: VERSION,
            msg_type,
            sequence,
            send_timestamp,
            payload,
        }
    }

    pub fn payload_len(&self) -> usize {
        self.payload.len()
    }
}

pub fn encode_message(env: &MessageEnvelope) -> Result<Vec<u8>, EncodeError> {
    if env.payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::PayloadTooLarge(env.payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + env.payload.len());
    out.extend_from_slice(&MAGIC);
    out.push(env.version);
    out.push(env.msg_type as u8);
    out.extend_from_slice(&(env.payload.len() as u16).to_le_bytes());
    out.extend_from_slice(&env.sequence.to_le_bytes());
    out.extend_from_slice(&env.send_timestamp.micros().to_le_bytes());
    out.extend_from_slice(&env.payload);
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<MessageEnvelope, DecodeError> {
    if bytes.len() < 5 {
        // Too short to hold the signature; report what we can check.
        if bytes.iter().zip(MAGIC.iter()).any(|(a, b)| a != b) {
            return Err(DecodeError::BadMagic);
        }
        return Err(DecodeError::TruncatedFrame {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if bytes[0..4] != MAGIC || bytes[4] != VERSION {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(DecodeError::TruncatedFrame {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let msg_type = MsgType::from_u8(bytes[5]).ok_or(DecodeError::UnknownType(bytes[5]))?;
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::TruncatedFrame {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let payload_len = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let expected = HEADER_LEN + payload_len;
    if bytes.len() != expected {
        return Err(DecodeError::TruncatedFrame {
            expected,
            actual: bytes.len(),
        });
    }
    let sequence = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let ts = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    Ok(MessageEnvelope {
        version: bytes[4],
        msg_type,
        sequence,
        send_timestamp: Timestamp(ts),
        payload: bytes[HEADER_LEN..].to_vec(),
    })
}

/// Per-sender sequence counters, one stream per message type.
#[derive(Debug, Clone, Default)]
pub struct SequenceCounters {
    next: [u32; 5],
}

impl SequenceCounters {
    pub fn next(&mut self, msg_type: MsgType) -> u32 {
        let slot = &mut self.next[msg_type.index()];
        let seq = *slot;
        *slot = slot.wrapping_add(1);
        seq
    }
}

/// Receive-side bookkeeping: counts gaps and rejects stale (reordered or
/// duplicated) frames per message type.
#[derive(Debug, Clone, Default)]
pub struct SequenceTracker {
    last: [Option<u32>; 5],
    pub gaps: u64,
    pub stale: u64,
}

impl SequenceTracker {
    /// Returns `false` when the frame is older than one already seen.
    pub fn accept(&mut self, msg_type: MsgType, sequence: u32) -> bool {
        let slot = &mut self.last[msg_type.index()];
        match *slot {
            Some(last) if sequence <= last => {
                self.stale += 1;
                false
            }
            Some(last) => {
                self.gaps += u64::from(sequence - last - 1);
                *slot = Some(sequence);
                true
            }
            None => {
                *slot = Some(sequence);
                true
            }
        }
    }
}
