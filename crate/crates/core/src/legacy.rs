//! Non-ABC traffic: Cubic window control, Cubic senders, short-flow arrivals
//! and a droptail router with optional legacy ECN marking.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::flight::{Flight, RttEstimator};
use crate::types::{Ack, EcnCodepoint, FlowId, Packet, SimTime, MTU};

pub const CUBIC_C: f64 = 0.4;
pub const CUBIC_BETA: f64 = 0.7;

/// Cubic congestion window in packets.
#[derive(Clone, Debug, PartialEq)]
pub struct Cubic {
    pub cwnd: f64,
    pub w_max: f64,
    pub ssthresh: f64,
    epoch_start: Option<SimTime>,
    k: f64,
}

impl Cubic {
    pub fn new(initial: f64) -> Self {
        Cubic {
            cwnd: initial.max(1.0),
            w_max: 0.0,
            ssthresh: f64::INFINITY,
            epoch_start: None,
            k: 0.0,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }

    /// Seconds from the start of the congestion epoch to the plateau at `w_max`.
    pub fn k(&self) -> f64 {
        self.k
    }

    /// The cubic growth curve, `elapsed` seconds into the current epoch.
    pub fn target(&self, elapsed: f64) -> f64 {
        CUBIC_C * (elapsed - self.k).powi(3) + self.w_max
    }

    /// Grows the window for `acked` packets worth of new ACKs.
    pub fn on_ack(&mut self, now: SimTime, acked: f64) -> f64 {
        if self.in_slow_start() {
            self.cwnd += acked;
            return self.cwnd;
        }
        let start = match self.epoch_start {
            Some(t) => t,
            None => {
                // Leaving slow start without a loss: plateau at the current window.
                self.w_max = self.w_max.max(self.cwnd);
                self.k = ((self.w_max - self.cwnd) / CUBIC_C).cbrt();
                self.epoch_start = Some(now);
                now
            }
        };
        let target = self.target(now.saturating_sub(start).as_secs_f64());
        if target > self.cwnd {
            self.cwnd += acked * (target - self.cwnd) / self.cwnd;
        } else {
            self.cwnd += acked * 0.01 / self.cwnd;
        }
        self.cwnd
    }

    /// Multiplicative decrease on a drop or ECN echo.
    pub fn on_congestion(&mut self, now: SimTime) -> f64 {
        self.w_max = self.cwnd;
        self.cwnd = (self.cwnd * CUBIC_BETA).max(1.0);
        self.ssthresh = self.cwnd;
        self.epoch_start = Some(now);
        self.k = (self.w_max * (1.0 - CUBIC_BETA) / CUBIC_C).cbrt();
        self.cwnd
    }

    /// Clamps the window from above, never below one packet.
    pub fn cap(&mut self, limit: f64) {
        self.cwnd = self.cwnd.min(limit).max(1.0);
    }
}

/// How a Cubic sender labels its packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegacyEcn {
    /// Not ECN-capable; congestion is signalled only by drops.
    Off,
    /// ECT(0); ECN routers mark instead of dropping.
    On,
}

/// A window-limited Cubic sender. `size_bytes = None` means backlogged.
#[derive(Clone, Debug)]
pub struct CubicSender {
    flow: FlowId,
    pub cubic: Cubic,
    flight: Flight,
    rtt: RttEstimator,
    ecn: LegacyEcn,
    next_seq: u64,
    recovery_seq: u64,
    remaining: Option<u64>,
    last_progress: SimTime,
    pub congestion_events: u64,
    pub timeouts: u64,
}

impl CubicSender {
    pub fn new(flow: FlowId, initial_window: f64, ecn: LegacyEcn, size_bytes: Option<u64>) -> Self {
        CubicSender {
            flow,
            cubic: Cubic::new(initial_window),
            flight: Flight::default(),
            rtt: RttEstimator::default(),
            ecn,
            next_seq: 0,
            recovery_seq: 0,
            remaining: size_bytes,
            last_progress: SimTime::ZERO,
            congestion_events: 0,
            timeouts: 0,
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn window(&self) -> f64 {
        self.cubic.cwnd
    }

    pub fn inflight(&self) -> usize {
        self.flight.len()
    }

    pub fn rtt(&self) -> &RttEstimator {
        &self.rtt
    }

    /// All data sent and acknowledged (never true for a backlogged flow).
    pub fn is_complete(&self) -> bool {
        self.remaining == Some(0) && self.flight.is_empty()
    }

    pub fn on_ack(&mut self, now: SimTime, ack: &Ack) {
        let retired = self.flight.ack_through(ack.acked_seq);
        if retired.packets == 0 && !ack.loss && !ack.ece {
            return;
        }
        if let Some(sent) = retired.newest_sent {
            self.rtt.sample(now - sent);
        }
        self.last_progress = now;
        if (ack.loss || ack.ece) && ack.acked_seq >= self.recovery_seq {
            self.cubic.on_congestion(now);
            self.recovery_seq = self.next_seq;
            self.congestion_events += 1;
        } else if !ack.loss && !ack.ece {
            self.cubic.on_ack(now, retired.bytes as f64 / MTU as f64);
        }
    }

    pub fn poll_transmit(&mut self, now: SimTime) -> Option<Packet> {
        if (self.flight.len() as f64) >= self.cubic.cwnd {
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
        let ecn = match self.ecn {
            LegacyEcn::Off => EcnCodepoint::NotEct,
            LegacyEcn::On => EcnCodepoint::Brake,
        };
        let pkt = Packet::legacy(self.flow, self.next_seq, size, ecn, now);
        self.flight.push(self.next_seq, size, now);
        self.next_seq += 1;
        Some(pkt)
    }

    /// When the retransmission timer should next be checked.
    pub fn timer_deadline(&self) -> Option<SimTime> {
        (!self.flight.is_empty()).then(|| self.last_progress + self.rtt.rto())
    }

    /// Declares the whole flight lost if no progress was made within an RTO.
    /// Returns whether a timeout fired.
    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self.timer_deadline() {
            Some(d) if d <= now => {
                self.flight.clear();
                self.cubic.on_congestion(now);
                self.recovery_seq = self.next_seq;
                self.last_progress = now;
                self.timeouts += 1;
                true
            }
            _ => false,
        }
    }
}

/// Per-router counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub enqueued: u64,
    pub dequeued: u64,
    pub dropped: u64,
    pub ecn_marked: u64,
    pub max_len: usize,
}

/// FIFO with tail drop and optional threshold ECN marking.
#[derive(Clone, Debug)]
pub struct DroptailRouter {
    queue: VecDeque<Packet>,
    capacity: usize,
    ecn_threshold: Option<usize>,
    pub stats: QueueStats,
}

pub const DEFAULT_BUFFER: usize = 250;
pub const DEFAULT_ECN_THRESHOLD: usize = 50;

impl DroptailRouter {
    pub fn new(capacity: usize, ecn_threshold: Option<usize>) -> Self {
        assert!(capacity > 0);
        DroptailRouter {
            queue: VecDeque::new(),
            capacity,
            ecn_threshold,
            stats: QueueStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Queueing delay seen by the head packet.
    pub fn head_delay(&self, now: SimTime) -> SimTime {
        self.queue
            .front()
            .map_or(SimTime::ZERO, |p| now.saturating_sub(p.enqueue_time))
    }

    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime) -> Result<(), Packet> {
        if self.queue.len() >= self.capacity {
            self.stats.dropped += 1;
            return Err(pkt);
        }
        if let Some(th) = self.ecn_threshold {
            if self.queue.len() > th && pkt.ecn.is_ect() {
                pkt.ecn = EcnCodepoint::EcnSet;
                self.stats.ecn_marked += 1;
            }
        }
        pkt.enqueue_time = now;
        self.queue.push_back(pkt);
        self.stats.enqueued += 1;
        self.stats.max_len = self.stats.max_len.max(self.queue.len());
        Ok(())
    }

    pub fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        let mut pkt = self.queue.pop_front()?;
        pkt.dequeue_time = now;
        self.stats.dequeued += 1;
        Some(pkt)
    }
}

/// Default size of a short flow, in bytes.
pub const SHORT_FLOW_BYTES: u64 = 10_000;

/// Poisson arrivals of fixed-size flows offering an average load.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShortFlowGenerator {
    pub load_bps: f64,
    pub flow_bytes: u64,
}

impl ShortFlowGenerator {
    pub fn new(load_bps: f64, flow_bytes: u64) -> Self {
        assert!(load_bps >= 0.0 && flow_bytes > 0);
        ShortFlowGenerator { load_bps, flow_bytes }
    }

    /// Mean flow arrivals per second.
    pub fn arrival_rate(&self) -> f64 {
        self.load_bps / (8.0 * self.flow_bytes as f64)
    }

    /// Arrival times in `[start, end)`.
    pub fn schedule<R: Rng + ?Sized>(&self, start: SimTime, end: SimTime, rng: &mut R) -> Vec<SimTime> {
        let rate = self.arrival_rate();
        if rate <= 0.0 {
            return Vec::new();
        }
        let exp = Exp::new(rate).expect("positive rate");
        let mut out = Vec::new();
        let mut t = start.as_secs_f64();
        loop {
            t += exp.sample(rng);
            let at = SimTime::from_secs_f64(t);
            if at >= end {
                return out;
            }
            out.push(at);
        }
    }

    pub fn schedule_seeded(&self, start: SimTime, end: SimTime, seed: u64) -> Vec<SimTime> {
        self.schedule(start, end, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Mark;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn decrease_from_100() {
        let mut c = Cubic::new(100.0);
        c.on_congestion(SimTime::ZERO);
        assert!(close(c.cwnd, 70.0));
        assert!(close(c.w_max, 100.0));
        assert!(close(c.k(), 75f64.cbrt()));
    }

    #[test]
    fn plateau_at_k() {
        let mut c = Cubic::new(100.0);
        c.on_congestion(SimTime::ZERO);
        assert!(close(c.target(c.k()), 100.0));
        assert!(close(c.target(0.0), 70.0));
    }

    #[test]
    fn window_reaches_w_max_around_k() {
        let mut c = Cubic::new(100.0);
        c.on_congestion(SimTime::ZERO);
        let k = c.k();
        // Feed one window of ACKs every 10 ms up to t = K.
        let mut t = 0.0;
        while t < k {
            t += 0.01;
            let n = c.cwnd;
            c.on_ack(SimTime::from_secs_f64(t), n);
        }
        assert!((c.cwnd - 100.0).abs() < 1.0, "cwnd {}", c.cwnd);
    }

    #[test]
    fn slow_start_doubles() {
        let mut c = Cubic::new(10.0);
        for _ in 0..10 {
            c.on_ack(SimTime::ZERO, 1.0);
        }
        assert!(close(c.cwnd, 20.0));
    }

    #[test]
    fn droptail_drops_and_marks() {
        let mut r = DroptailRouter::new(3, Some(1));
        let mk = |s, ecn| Packet::legacy(FlowId(0), s, MTU, ecn, SimTime::ZERO);
        assert!(r.enqueue(mk(0, EcnCodepoint::Brake), SimTime::ZERO).is_ok());
        assert!(r.enqueue(mk(1, EcnCodepoint::Brake), SimTime::ZERO).is_ok());
        assert!(r.enqueue(mk(2, EcnCodepoint::NotEct), SimTime::ZERO).is_ok());
        assert!(r.enqueue(mk(3, EcnCodepoint::Brake), SimTime::ZERO).is_err());
        let got: Vec<EcnCodepoint> = std::iter::from_fn(|| r.dequeue(SimTime::ZERO)).map(|p| p.ecn).collect();
        assert_eq!(
            got,
            vec![EcnCodepoint::Brake, EcnCodepoint::Brake, EcnCodepoint::NotEct]
        );

        let mut r = DroptailRouter::new(10, Some(1));
        for s in 0..3 {
            r.enqueue(mk(s, EcnCodepoint::Accel), SimTime::ZERO).unwrap();
        }
        let last = std::iter::from_fn(|| r.dequeue(SimTime::ZERO)).last().unwrap();
        assert_eq!(last.ecn, EcnCodepoint::EcnSet);
        let s = r.stats;
        assert_eq!(s.enqueued, s.dequeued + s.dropped + r.len() as u64);
    }

    #[test]
    fn short_flow_rate() {
        let g = ShortFlowGenerator::new(1e6, SHORT_FLOW_BYTES);
        assert!(close(g.arrival_rate(), 12.5));
        assert!(ShortFlowGenerator::new(0.0, SHORT_FLOW_BYTES)
            .schedule_seeded(SimTime::ZERO, SimTime::from_secs(100), 1)
            .is_empty());
        let a = g.schedule_seeded(SimTime::ZERO, SimTime::from_secs(400), 7);
        let b = g.schedule_seeded(SimTime::ZERO, SimTime::from_secs(400), 7);
        assert_eq!(a, b);
        let observed = a.len() as f64 / 400.0;
        // 5000 expected arrivals; sd ~ 71.
        assert!((observed - 12.5).abs() < 0.5, "rate {observed}");
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn short_flow_sends_exact_bytes() {
        let mut s = CubicSender::new(FlowId(1), 10.0, LegacyEcn::Off, Some(SHORT_FLOW_BYTES));
        let pkts: Vec<Packet> = std::iter::from_fn(|| s.poll_transmit(SimTime::ZERO)).collect();
        assert_eq!(pkts.len(), 7);
        assert_eq!(pkts.iter().map(|p| p.size as u64).sum::<u64>(), SHORT_FLOW_BYTES);
        assert_eq!(pkts.last().unwrap().size, 1000);
        assert!(!s.is_complete());
        s.on_ack(
            SimTime::from_millis(50),
            &Ack {
                flow: FlowId(1),
                acked_seq: 6,
                bytes_newly_acked: SHORT_FLOW_BYTES,
                echo_mark: Mark::Accel,
                ece: false,
                loss: false,
            },
        );
        assert!(s.is_complete());
    }

    #[test]
    fn one_decrease_per_window() {
        let mut s = CubicSender::new(FlowId(1), 20.0, LegacyEcn::On, None);
        while s.poll_transmit(SimTime::ZERO).is_some() {}
        let ack = |seq| Ack {
            flow: FlowId(1),
            acked_seq: seq,
            bytes_newly_acked: 1500,
            echo_mark: Mark::Accel,
            ece: true,
            loss: false,
        };
        s.on_ack(SimTime::from_millis(10), &ack(0));
        assert_eq!(s.congestion_events, 1);
        s.on_ack(SimTime::from_millis(11), &ack(1));
        assert_eq!(s.congestion_events, 1);
    }

    #[test]
    fn timeout_clears_flight() {
        let mut s = CubicSender::new(FlowId(1), 4.0, LegacyEcn::Off, None);
        while s.poll_transmit(SimTime::ZERO).is_some() {}
        assert_eq!(s.inflight(), 4);
        let d = s.timer_deadline().unwrap();
        assert!(!s.on_timer(SimTime::from_millis(1)));
        assert!(s.on_timer(d));
        assert_eq!(s.inflight(), 0);
        assert!(s.timer_deadline().is_none());
        assert!(s.poll_transmit(d).is_some());
    }
}
