//! Data translation between entities: framing, transports, clock sync and
//! latency monitoring.

mod clock;
mod envelope;
mod latency;
mod payload;
pub mod sim;
mod transport;

pub use clock::{
    answer_time_request, best_offset, clock_sync, ClockOffset, SyncError, SyncOptions,
    SyncSample, SyncSession, DEFAULT_ROUNDS, DEFAULT_ROUND_TIMEOUT, RESYNC_INTERVAL,
};
pub use envelope::{
    decode_message, encode_message, DecodeError, EncodeError, MessageEnvelope, MsgType,
    SequenceCounters, SequenceTracker, HEADER_LEN, MAGIC, MAX_PAYLOAD, VERSION,
};
pub use latency::{LatencyMonitor, LatencyStats, LATENCY_THRESHOLD_MS, WINDOW_CAPACITY};
pub use payload::{Message, Payload, PayloadError, TrackRecord, FLAG_EMERGENCY, TRACK_RECORD_LEN};
pub use sim::{ChannelConfig, Delivery, SimChannel, SimulatedPeerLink};
pub use transport::{system_now, Received, Transport, UdpEndpoint};

pub const DEFAULT_PT_PORT: u16 = 47001;
pub const DEFAULT_DT_PORT: u16 = 47002;
