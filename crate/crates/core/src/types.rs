//! Value types shared by every part of the simulator.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

/// Bytes in one maximum transmission unit.
pub const MTU: u32 = 1500;

/// Simulation clock, in whole microseconds since the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s <= 0.0 || !s.is_finite() {
            return SimTime(0);
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 = self.0.saturating_add(rhs.0);
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Converts a byte count to (fractional) MTU-sized packets.
pub fn mtu_packets(bytes: u64) -> f64 {
    bytes as f64 / MTU as f64
}

/// Seconds needed to serialize `bytes` at `rate_bps`.
pub fn transmission_secs(bytes: u64, rate_bps: f64) -> f64 {
    bytes as f64 * 8.0 / rate_bps
}

/// The two ECN bits of the IP header, as interpreted by accel/brake routers.
///
/// `Accel` (01) and `Brake` (10) occupy the two ECT codepoints, so a legacy
/// ECN router treats both as ECN-capable and marks congestion with 11.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EcnCodepoint {
    NotEct,
    Accel,
    Brake,
    EcnSet,
}

impl EcnCodepoint {
    pub fn to_bits(self) -> u8 {
        match self {
            EcnCodepoint::NotEct => 0b00,
            EcnCodepoint::Accel => 0b01,
            EcnCodepoint::Brake => 0b10,
            EcnCodepoint::EcnSet => 0b11,
        }
    }

    /// Only the low two bits are significant.
    pub fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0b00 => EcnCodepoint::NotEct,
            0b01 => EcnCodepoint::Accel,
            0b10 => EcnCodepoint::Brake,
            _ => EcnCodepoint::EcnSet,
        }
    }

    /// Whether a legacy ECN router may mark this packet instead of dropping it.
    pub fn is_ect(self) -> bool {
        matches!(self, EcnCodepoint::Accel | EcnCodepoint::Brake)
    }
}

/// Accel/brake feedback as echoed back to a sender.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mark {
    Accel,
    Brake,
}

impl Mark {
    pub fn from_codepoint(ecn: EcnCodepoint) -> Option<Mark> {
        match ecn {
            EcnCodepoint::Accel => Some(Mark::Accel),
            EcnCodepoint::Brake => Some(Mark::Brake),
            _ => None,
        }
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mark::Accel => f.write_str("accel"),
            Mark::Brake => f.write_str("brake"),
        }
    }
}

/// Flow identity carried by every packet and ACK.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A simulated data packet. Not a wire format; only what the protocol reads.
#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub flow: FlowId,
    pub seq: u64,
    pub size: u32,
    pub ecn: EcnCodepoint,
    /// Set by senders that speak accel/brake, so routers can steer the packet
    /// into the ABC queue.
    pub abc: bool,
    pub send_time: SimTime,
    /// Enqueue/dequeue stamps at the most recent hop.
    pub enqueue_time: SimTime,
    pub dequeue_time: SimTime,
}

impl Packet {
    /// A freshly sent accel/brake packet: starts out marked `Accel`.
    pub fn abc(flow: FlowId, seq: u64, size: u32, now: SimTime) -> Self {
        debug_assert!(size > 0);
        Packet {
            flow,
            seq,
            size,
            ecn: EcnCodepoint::Accel,
            abc: true,
            send_time: now,
            enqueue_time: now,
            dequeue_time: now,
        }
    }

    pub fn legacy(flow: FlowId, seq: u64, size: u32, ecn: EcnCodepoint, now: SimTime) -> Self {
        debug_assert!(size > 0);
        Packet {
            flow,
            seq,
            size,
            ecn,
            abc: false,
            send_time: now,
            enqueue_time: now,
            dequeue_time: now,
        }
    }
}

/// Receiver feedback.
///
/// `echo_mark` rides in the repurposed NS bit and `ece` in the ECN-Echo flag;
/// the two are independent.
#[derive(Clone, Debug, PartialEq)]
pub struct Ack {
    pub flow: FlowId,
    /// Highest sequence number covered by this ACK (cumulative).
    pub acked_seq: u64,
    /// Bytes of the packets in this ACK's run, i.e. what the sender's byte
    /// counter should apply `echo_mark` to.
    pub bytes_newly_acked: u64,
    pub echo_mark: Mark,
    pub ece: bool,
    /// The receiver saw a sequence gap since its previous ACK.
    pub loss: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mtu_packets_is_linear() {
        assert_eq!(mtu_packets(1500), 1.0);
        assert_eq!(mtu_packets(0), 0.0);
        assert_eq!(mtu_packets(3000), 2.0);
    }

    #[test]
    fn codepoint_roundtrip() {
        for cp in [
            EcnCodepoint::NotEct,
            EcnCodepoint::Accel,
            EcnCodepoint::Brake,
            EcnCodepoint::EcnSet,
        ] {
            assert_eq!(EcnCodepoint::from_bits(cp.to_bits()), cp);
        }
        assert_eq!(EcnCodepoint::Accel.to_bits(), 0b01);
        assert_eq!(EcnCodepoint::Brake.to_bits(), 0b10);
        assert!(EcnCodepoint::Accel.is_ect() && EcnCodepoint::Brake.is_ect());
        assert!(!EcnCodepoint::NotEct.is_ect());
    }

    #[test]
    fn fresh_abc_packet_is_accel() {
        let p = Packet::abc(FlowId(3), 0, MTU, SimTime::ZERO);
        assert_eq!(p.ecn, EcnCodepoint::Accel);
        assert!(p.abc);
    }

    #[test]
    fn time_conversions() {
        assert_eq!(SimTime::from_millis(20).as_micros(), 20_000);
        assert_eq!(SimTime::from_secs_f64(0.0015), SimTime::from_micros(1500));
        assert_eq!(SimTime::from_secs_f64(-1.0), SimTime::ZERO);
        assert_eq!(
            SimTime::from_millis(5) - SimTime::from_millis(2),
            SimTime::from_millis(3)
        );
    }

    proptest! {
        #[test]
        fn bits_roundtrip_any_byte(b in any::<u8>()) {
            let cp = EcnCodepoint::from_bits(b);
            prop_assert_eq!(cp.to_bits(), b & 0b11);
        }
    }
}
