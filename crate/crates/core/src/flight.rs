//! Bookkeeping shared by every sender: outstanding packets and RTT estimates.

use std::collections::VecDeque;

use crate::types::SimTime;

/// Packets sent but not yet covered by a cumulative ACK.
#[derive(Clone, Debug, Default)]
pub struct Flight {
    outstanding: VecDeque<(u64, u32, SimTime)>,
}

/// What one cumulative ACK retired from the flight.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Retired {
    pub packets: usize,
    pub bytes: u64,
    /// Send time of the newest retired packet, for RTT sampling.
    pub newest_sent: Option<SimTime>,
}

impl Flight {
    pub fn len(&self) -> usize {
        self.outstanding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outstanding.is_empty()
    }

    pub fn push(&mut self, seq: u64, size: u32, now: SimTime) {
        debug_assert!(self.outstanding.back().is_none_or(|&(s, _, _)| s < seq));
        self.outstanding.push_back((seq, size, now));
    }

    /// Retires every packet with sequence number `<= acked_seq`.
    pub fn ack_through(&mut self, acked_seq: u64) -> Retired {
        let mut r = Retired::default();
        while let Some(&(seq, size, sent)) = self.outstanding.front() {
            if seq > acked_seq {
                break;
            }
            self.outstanding.pop_front();
            r.packets += 1;
            r.bytes += size as u64;
            r.newest_sent = Some(sent);
        }
        r
    }

    /// Drops everything outstanding (retransmission timeout).
    pub fn clear(&mut self) -> usize {
        let n = self.outstanding.len();
        self.outstanding.clear();
        n
    }

    pub fn oldest_sent(&self) -> Option<SimTime> {
        self.outstanding.front().map(|&(_, _, t)| t)
    }
}

/// Smoothed RTT in the style of RFC 6298.
#[derive(Clone, Debug, PartialEq)]
pub struct RttEstimator {
    srtt: Option<f64>,
    rttvar: f64,
    min_rtt: Option<SimTime>,
}

pub const MIN_RTO: SimTime = SimTime::from_millis(200);
const INITIAL_RTO: SimTime = SimTime::from_secs(1);

impl Default for RttEstimator {
    fn default() -> Self {
        RttEstimator {
            srtt: None,
            rttvar: 0.0,
            min_rtt: None,
        }
    }
}

impl RttEstimator {
    pub fn sample(&mut self, rtt: SimTime) {
        let r = rtt.as_secs_f64();
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - r).abs();
                self.srtt = Some(0.875 * s + 0.125 * r);
            }
        }
        self.min_rtt = Some(self.min_rtt.map_or(rtt, |m| m.min(rtt)));
    }

    pub fn srtt(&self) -> Option<SimTime> {
        self.srtt.map(SimTime::from_secs_f64)
    }

    pub fn min_rtt(&self) -> Option<SimTime> {
        self.min_rtt
    }

    pub fn rto(&self) -> SimTime {
        match self.srtt {
            None => INITIAL_RTO,
            Some(s) => SimTime::from_secs_f64(s + 4.0 * self.rttvar).max(MIN_RTO),
        }
    }
}
