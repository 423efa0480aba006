//! ABC endpoint: accel/brake window plus a Cubic shadow window for non-ABC
//! bottlenecks.

use crate::flight::{Flight, RttEstimator};
use crate::legacy::Cubic;
use crate::types::{Ack, FlowId, Mark, Packet, SimTime, MTU};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcSenderConfig {
    pub initial_window: f64,
    /// The `+1/w` per-packet term that adds one packet per RTT.
    pub additive_increase: bool,
    pub min_window: f64,
    /// Clamp both windows to twice the in-flight count seen as each ACK arrives.
    pub cap_windows: bool,
    /// Run the Cubic shadow window. Without it the ABC window alone governs.
    pub cubic_shadow: bool,
}

impl Default for AbcSenderConfig {
    fn default() -> Self {
        AbcSenderConfig {
            initial_window: 10.0,
            additive_increase: true,
            min_window: 1.0,
            cap_windows: true,
            cubic_shadow: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub acks: u64,
    pub accel_bytes: u64,
    pub brake_bytes: u64,
    pub ignored_acks: u64,
    pub congestion_events: u64,
    pub timeouts: u64,
    pub cap_checks: u64,
    pub cap_violations: u64,
}

/// One accel/brake sender. `size_bytes = None` means backlogged.
#[derive(Clone, Debug)]
pub struct AbcSender {
    flow: FlowId,
    cfg: AbcSenderConfig,
    w_abc: f64,
    pub cubic: Cubic,
    flight: Flight,
    rtt: RttEstimator,
    next_seq: u64,
    recovery_seq: u64,
    remaining: Option<u64>,
    last_progress: SimTime,
    /// Packets in flight when the last ACK arrived; the cap is twice this.
    /// Unset until the first ACK.
    cap_inflight: Option<usize>,
    pub stats: SenderStats,
}

impl AbcSender {
    pub fn new(flow: FlowId, cfg: AbcSenderConfig, size_bytes: Option<u64>) -> Self {
        AbcSender {
            flow,
            cfg,
            w_abc: cfg.initial_window.max(cfg.min_window),
            cubic: Cubic::new(cfg.initial_window),
            flight: Flight::default(),
            rtt: RttEstimator::default(),
            next_seq: 0,
            recovery_seq: 0,
            remaining: size_bytes,
            last_progress: SimTime::ZERO,
            cap_inflight: None,
            stats: SenderStats::default(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn w_abc(&self) -> f64 {
        self.w_abc
    }

    pub fn w_cubic(&self) -> f64 {
        if self.cfg.cubic_shadow {
            self.cubic.cwnd
        } else {
            f64::INFINITY
        }
    }

    pub fn window(&self) -> f64 {
        self.w_abc.min(self.w_cubic()).max(self.cfg.min_window)
    }

    pub fn inflight(&self) -> usize {
        self.flight.len()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    pub fn is_complete(&self) -> bool {
        self.remaining == Some(0) && self.flight.is_empty()
    }

    pub fn on_ack(&mut self, now: SimTime, ack: &Ack) {
        debug_assert_eq!(ack.flow, self.flow);
        let outstanding = self.flight.len();
        let retired = self.flight.ack_through(ack.acked_seq);
        if retired.packets == 0 {
            self.stats.ignored_acks += 1;
            return;
        }
        self.cap_inflight = Some(outstanding);
        self.stats.acks += 1;
        if let Some(sent) = retired.newest_sent {
            self.rtt.sample(now - sent);
        }
        self.last_progress = now;

        let delta = ack.bytes_newly_acked as f64 / MTU as f64;
        let ai = if self.cfg.additive_increase {
            1.0 / self.w_abc
        } else {
            0.0
        };
        match ack.echo_mark {
            Mark::Accel => {
                self.w_abc += delta * (1.0 + ai);
                self.stats.accel_bytes += ack.bytes_newly_acked;
            }
            Mark::Brake => {
                self.w_abc += delta * (-1.0 + ai);
                self.stats.brake_bytes += ack.bytes_newly_acked;
            }
        }
        self.w_abc = self.w_abc.max(self.cfg.min_window);

        if ack.loss || ack.ece {
            if ack.acked_seq >= self.recovery_seq {
                self.cubic.on_congestion(now);
                self.recovery_seq = self.next_seq;
                self.stats.congestion_events += 1;
            }
        } else {
            self.cubic.on_ack(now, delta);
        }

        self.apply_caps();
    }

    /// Upper bound both windows are held to, when capping is on; unbounded
    /// before the first ACK.
    pub fn cap_limit(&self) -> f64 {
        self.cap_inflight.map_or(f64::INFINITY, |n| 2.0 * n.max(1) as f64)
    }

    /// Both windows are held to twice the packets that were in flight when
    /// the ACK arrived. Counting after the ACK retires its packets would pin
    /// a small window: with two packets per ACK, w = 4 leaves 2 in flight and
    /// a cap of 4 forever.
    fn apply_caps(&mut self) {
        if self.cfg.cap_windows {
            let cap = self.cap_limit();
            self.w_abc = self.w_abc.min(cap).max(self.cfg.min_window);
            self.cubic.cap(cap);
        }
        self.check_caps();
    }

    fn check_caps(&mut self) {
        if !self.cfg.cap_windows {
            return;
        }
        let cap = self.cap_limit() + 1e-9;
        self.stats.cap_checks += 1;
        if self.w_abc > cap || (self.cfg.cubic_shadow && self.cubic.cwnd > cap) {
            self.stats.cap_violations += 1;
        }
    }

    pub fn poll_transmit(&mut self, now: SimTime) -> Option<Packet> {
        if (self.flight.len() as f64) >= self.window() {
            return None;
        }
        let size = match self.remaining {
            None => MTU,
            Some(0) => return None,
            Some(r) => r.min(MTU as u64) as u32,
        };
        if let Some(r) = self.remaining.as_mut() {
            *r -= size as u64;
        }
        if self.flight.is_empty() {
            self.last_progress = now;
        }
        let pkt = Packet::abc(self.flow, self.next_seq, size, now);
        self.flight.push(self.next_seq, size, now);
        self.next_seq += 1;
        Some(pkt)
    }

    pub fn timer_deadline(&self) -> Option<SimTime> {
        (!self.flight.is_empty()).then(|| self.last_progress + self.rtt.rto())
    }

    /// Retransmission timeout: forget the flight and back off the Cubic window.
    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self.timer_deadline() {
            Some(d) if d <= now => {
                self.flight.clear();
                self.cap_inflight = Some(0);
                self.cubic.on_congestion(now);
                self.recovery_seq = self.next_seq;
                self.last_progress = now;
                self.stats.timeouts += 1;
                self.apply_caps();
                true
            }
            _ => false,
        }
    }
}

/// Fixed point of `w -> w + 2f - 1 + 1` per RTT: the window where one RTT of
/// feedback at accel fraction `f` leaves it unchanged.
pub fn steady_state_window(f: f64) -> Option<f64> {
    (0.0..0.5).contains(&f).then(|| 1.0 / (1.0 - 2.0 * f))
}

/// Expected per-RTT window change when only a fraction `p` of ACKs arrive.
pub fn lost_ack_drift(f: f64, p: f64, w: f64) -> f64 {
    (2.0 * f - 1.0) * p * w
}
