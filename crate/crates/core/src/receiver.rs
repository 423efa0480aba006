//! Receiver-side echo of accel/brake marks and legacy ECN, with delayed ACKs.

use crate::types::{Ack, EcnCodepoint, FlowId, Mark, Packet, SimTime};

/// Default number of packets coalesced into one ACK.
pub const DEFAULT_COALESCE: u32 = 2;

/// Default delayed-ACK timeout.
pub const DEFAULT_ACK_DELAY: SimTime = SimTime::from_millis(40);

/// DCTCP-style echo state machine for one flow.
///
/// A run of packets sharing a mark is acknowledged every `m` packets; a mark
/// change flushes the old run under its old mark and acknowledges the new
/// packet at once, so at most two ACKs come out of one arrival.
#[derive(Clone, Debug)]
pub struct EchoState {
    flow: FlowId,
    m: u32,
    last_mark: Mark,
    pending_pkts: u32,
    pending_bytes: u64,
    pending_ece: bool,
    pending_loss: bool,
    run_last_seq: u64,
    expected_seq: u64,
    emitted: u64,
}

impl EchoState {
    pub fn new(flow: FlowId, m: u32) -> Self {
        assert!(m >= 1, "coalesce count must be at least 1");
        EchoState {
            flow,
            m,
            last_mark: Mark::Accel,
            pending_pkts: 0,
            pending_bytes: 0,
            pending_ece: false,
            pending_loss: false,
            run_last_seq: 0,
            expected_seq: 0,
            emitted: 0,
        }
    }

    pub fn last_mark(&self) -> Mark {
        self.last_mark
    }

    pub fn pending(&self) -> u32 {
        self.pending_pkts
    }

    /// Number of ACKs emitted so far; lets a caller tell whether a
    /// delayed-ACK timer armed earlier is still relevant.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    pub fn on_packet(&mut self, pkt: &Packet) -> Vec<Ack> {
        debug_assert_eq!(pkt.flow, self.flow);
        let mut acks = Vec::new();
        let gap = pkt.seq > self.expected_seq;
        self.expected_seq = self.expected_seq.max(pkt.seq + 1);

        // NotEct and EcnSet carry no accel/brake information; they extend the
        // current run.
        let mark = Mark::from_codepoint(pkt.ecn).unwrap_or(self.last_mark);
        if mark != self.last_mark {
            if self.pending_pkts > 0 {
                acks.push(self.emit());
            }
            self.last_mark = mark;
            self.absorb(pkt, gap);
            acks.push(self.emit());
            return acks;
        }

        self.absorb(pkt, gap);
        if self.pending_pkts >= self.m || gap {
            acks.push(self.emit());
        }
        acks
    }

    /// Flushes a partially filled run (delayed-ACK timer expiry).
    pub fn flush(&mut self) -> Option<Ack> {
        (self.pending_pkts > 0).then(|| self.emit())
    }

    fn absorb(&mut self, pkt: &Packet, gap: bool) {
        self.pending_pkts += 1;
        self.pending_bytes += pkt.size as u64;
        self.pending_ece |= pkt.ecn == EcnCodepoint::EcnSet;
        self.pending_loss |= gap;
        self.run_last_seq = pkt.seq;
    }

    fn emit(&mut self) -> Ack {
        let ack = Ack {
            flow: self.flow,
            acked_seq: self.run_last_seq,
            bytes_newly_acked: self.pending_bytes,
            echo_mark: self.last_mark,
            ece: self.pending_ece,
            loss: self.pending_loss,
        };
        self.pending_pkts = 0;
        self.pending_bytes = 0;
        self.pending_ece = false;
        self.pending_loss = false;
        self.emitted += 1;
        ack
    }
}
