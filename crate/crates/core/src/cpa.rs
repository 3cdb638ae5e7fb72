//! Periodic-with-jitter event models and Ethernet frame timing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::time::{Duration, Rate};

/// Preamble, SFD, MAC header, FCS and inter-frame gap.
pub const PROTOCOL_OVERHEAD: u32 = 42;
/// Payloads shorter than this are padded.
pub const MIN_PAYLOAD_ON_WIRE: u32 = 42;
/// Smallest frame on the wire; also the last stretch of a frame that is never interrupted.
pub const MIN_FRAME: u32 = 84;
/// Longest fragment that cannot be preempted.
pub const MAX_NON_PREEMPTABLE: u32 = 143;
/// Extra wire bytes per preemption (mCRC, IFG, preamble, SMD and fragment count).
pub const PREEMPTION_OVERHEAD: u32 = 24;
/// Minimum payload carried by every fragment except the last.
pub const MIN_FRAGMENT_PAYLOAD: u32 = 60;

/// Periodic arrivals with release jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct EventModel {
    pub period: Duration,
    pub jitter: Duration,
}

impl EventModel {
    pub fn new(period: Duration, jitter: Duration) -> Result<Self> {
        if period <= Duration::ZERO {
            return Err(Error::Domain("event model period must be positive".into()));
        }
        if jitter.is_negative() {
            return Err(Error::Domain("event model jitter must be non-negative".into()));
        }
        Ok(EventModel { period, jitter })
    }

    pub fn periodic(period: Duration) -> Result<Self> {
        Self::new(period, Duration::ZERO)
    }

    /// Most arrivals in any closed window of length `dt`.
    pub fn eta_plus(&self, dt: Duration) -> u64 {
        if dt.is_negative() {
            return 0;
        }
        ((dt + self.jitter).div_floor(self.period) + 1) as u64
    }

    /// Fewest arrivals in any window of length `dt`.
    pub fn eta_minus(&self, dt: Duration) -> u64 {
        let n = (dt - self.jitter).div_ceil(self.period) - 1;
        n.max(0) as u64
    }

    /// Shortest span containing `q` arrivals.
    pub fn delta_minus(&self, q: u64) -> Duration {
        if q <= 1 {
            return Duration::ZERO;
        }
        (self.period * (q - 1)).saturating_sub(self.jitter)
    }

    /// Longest span between the first and `q`-th arrival.
    pub fn delta_plus(&self, q: u64) -> Duration {
        if q <= 1 {
            return Duration::ZERO;
        }
        self.period * (q - 1) + self.jitter
    }

    /// Output model after a hop whose response time lies in `[bcrt, wcrt]`.
    pub fn propagate(&self, wcrt: Duration, bcrt: Duration) -> Result<EventModel> {
        if wcrt < bcrt {
            return Err(Error::Domain(format!("worst-case response {wcrt} below best case {bcrt}")));
        }
        EventModel::new(self.period, self.jitter + (wcrt - bcrt))
    }
}

/// Wire bytes of a frame with `payload` bytes, padding short payloads.
pub fn wire_bytes(payload: u32) -> u32 {
    PROTOCOL_OVERHEAD + payload.max(MIN_PAYLOAD_ON_WIRE)
}

/// Transmission time of a whole frame carrying `payload` bytes.
pub fn transmission_time(payload: u32, rate: Rate) -> Duration {
    rate.byte_time(wire_bytes(payload) as u64)
}

/// Time to send `bytes` raw bytes.
pub fn frame_time(bytes: u32, rate: Rate) -> Duration {
    rate.byte_time(bytes as u64)
}

/// Most times a frame carrying `payload` bytes can be preempted.
pub fn max_fragments(payload: u32) -> Result<u64> {
    if payload < MIN_PAYLOAD_ON_WIRE {
        return Err(Error::Domain(format!(
            "payload {payload} is below the {MIN_PAYLOAD_ON_WIRE}-byte minimum"
        )));
    }
    Ok(((payload - MIN_PAYLOAD_ON_WIRE) / MIN_FRAGMENT_PAYLOAD) as u64)
}
