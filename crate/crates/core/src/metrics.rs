//! Run logs and the post-run measurements computed from them.

use std::fmt::Write as _;

use thiserror::Error;

use crate::abc_router::DequeueRecord;
use crate::links::LinkProcess;
use crate::types::{FlowId, SimTime, MTU};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no samples to summarise")]
    Empty,
    #[error("all throughputs are zero")]
    AllZero,
    #[error("negative throughput {0}")]
    Negative(f64),
    #[error("percentile {0} outside (0, 1]")]
    Percentile(f64),
    #[error("no hop {0}")]
    NoHop(usize),
}

/// One packet leaving one hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HopRecord {
    pub flow: FlowId,
    pub seq: u64,
    pub size: u32,
    pub enqueue: SimTime,
    pub dequeue: SimTime,
}

impl HopRecord {
    pub fn queue_delay(&self) -> SimTime {
        self.dequeue - self.enqueue
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub flow: FlowId,
    pub seq: u64,
    pub size: u32,
    pub send_time: SimTime,
    pub recv_time: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DropRecord {
    pub time: SimTime,
    pub hop: usize,
    pub flow: FlowId,
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlowKind {
    Abc,
    Cubic,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::Abc => "abc",
            FlowKind::Cubic => "cubic",
        }
    }
}

/// Periodic sender snapshot. `w_abc` is `None` for Cubic senders.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowSample {
    pub time: SimTime,
    pub w_abc: Option<f64>,
    pub w_cubic: f64,
    pub inflight: usize,
    pub delivered_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowLog {
    pub id: FlowId,
    pub kind: FlowKind,
    pub short: bool,
    pub start: SimTime,
    pub size: Option<u64>,
    pub completion: Option<SimTime>,
    pub delivered_bytes: u64,
    pub samples: Vec<FlowSample>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HopLog {
    pub name: String,
    pub link: LinkProcess,
    pub records: Vec<HopRecord>,
    pub drops: u64,
    /// ABC marking decisions, when router tracing is on.
    pub trace: Vec<DequeueRecord>,
    /// ABC queue weight over time; empty for droptail hops.
    pub weights: Vec<(SimTime, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub duration: SimTime,
    pub sent: u64,
    pub hops: Vec<HopLog>,
    pub deliveries: Vec<Delivery>,
    pub drops: Vec<DropRecord>,
    pub flows: Vec<FlowLog>,
}

impl MetricsLog {
    pub fn hop(&self, hop: usize) -> Result<&HopLog, MetricsError> {
        self.hops.get(hop).ok_or(MetricsError::NoHop(hop))
    }
}

/// Bytes delivered by a hop over the bytes its opportunities could carry,
/// for packets dequeued in `(from, to]`.
pub fn utilization_between(log: &MetricsLog, hop: usize, from: SimTime, to: SimTime) -> Result<f64, MetricsError> {
    let h = log.hop(hop)?;
    let slots = h.link.opportunities_in(from, to);
    if slots == 0 {
        return Ok(0.0);
    }
    let bytes: u64 = h
        .records
        .iter()
        .filter(|r| r.dequeue > from && r.dequeue <= to)
        .map(|r| r.size as u64)
        .sum();
    Ok(bytes as f64 / (slots as f64 * MTU as f64))
}

pub fn utilization(log: &MetricsLog, hop: usize) -> Result<f64, MetricsError> {
    utilization_between(log, hop, SimTime::ZERO, log.duration)
}

/// Nearest-rank percentile: the smallest value with at least `p` of the
/// samples at or below it.
pub fn percentile(values: &mut [SimTime], p: f64) -> Result<SimTime, MetricsError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(MetricsError::Percentile(p));
    }
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    values.sort_unstable();
    let rank = (p * values.len() as f64).ceil() as usize;
    Ok(values[rank.clamp(1, values.len()) - 1])
}

/// Queueing delays at a hop for packets dequeued in `(from, to]`.
pub fn hop_delays(log: &MetricsLog, hop: usize, from: SimTime, to: SimTime) -> Result<Vec<SimTime>, MetricsError> {
    Ok(log
        .hop(hop)?
        .records
        .iter()
        .filter(|r| r.dequeue > from && r.dequeue <= to)
        .map(HopRecord::queue_delay)
        .collect())
}

pub fn delay_percentile(log: &MetricsLog, hop: usize, p: f64) -> Result<SimTime, MetricsError> {
    percentile(&mut hop_delays(log, hop, SimTime::ZERO, log.duration)?, p)
}

/// Queueing delay summed over every hop, per delivered packet, for packets
/// received in `(from, to]`.
pub fn end_to_end_queue_delays(log: &MetricsLog, from: SimTime, to: SimTime) -> Vec<SimTime> {
    use std::collections::HashMap;
    let mut per_pkt: HashMap<(FlowId, u64), SimTime> = HashMap::new();
    for h in &log.hops {
        for r in &h.records {
            *per_pkt.entry((r.flow, r.seq)).or_default() += r.queue_delay();
        }
    }
    log.deliveries
        .iter()
        .filter(|d| d.recv_time > from && d.recv_time <= to)
        .map(|d| per_pkt.get(&(d.flow, d.seq)).copied().unwrap_or_default())
        .collect()
}

pub fn jain_index(throughputs: &[f64]) -> Result<f64, MetricsError> {
    if throughputs.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(&x) = throughputs.iter().find(|&&x| x < 0.0) {
        return Err(MetricsError::Negative(x));
    }
    let sum: f64 = throughputs.iter().sum();
    let sq: f64 = throughputs.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(sum * sum / (throughputs.len() as f64 * sq))
}

/// Delivered bits per second for one flow over `(from, to]`.
pub fn throughput(log: &MetricsLog, flow: FlowId, from: SimTime, to: SimTime) -> f64 {
    let span = to.saturating_sub(from).as_secs_f64();
    if span == 0.0 {
        return 0.0;
    }
    let bytes: u64 = log
        .deliveries
        .iter()
        .filter(|d| d.flow == flow && d.recv_time > from && d.recv_time <= to)
        .map(|d| d.size as u64)
        .sum();
    bytes as f64 * 8.0 / span
}

/// Aggregate delivered rate of a set of flows over `(from, to]`.
pub fn aggregate_throughput(log: &MetricsLog, from: SimTime, to: SimTime, keep: impl Fn(FlowId) -> bool) -> f64 {
    let span = to.saturating_sub(from).as_secs_f64();
    if span == 0.0 {
        return 0.0;
    }
    let bytes: u64 = log
        .deliveries
        .iter()
        .filter(|d| keep(d.flow) && d.recv_time > from && d.recv_time <= to)
        .map(|d| d.size as u64)
        .sum();
    bytes as f64 * 8.0 / span
}

/// Throughput of one flow in consecutive bins of width `bin`, labelled by bin end.
pub fn throughput_series(log: &MetricsLog, flow: FlowId, bin: SimTime) -> Vec<(SimTime, f64)> {
    assert!(bin > SimTime::ZERO);
    let n = log.duration.as_micros().div_ceil(bin.as_micros()) as usize;
    let mut bytes = vec![0u64; n];
    for d in log.deliveries.iter().filter(|d| d.flow == flow) {
        // Bins are half-open on the left, matching `throughput`.
        let idx = (d.recv_time.as_micros().saturating_sub(1) / bin.as_micros()) as usize;
        if idx < n {
            bytes[idx] += d.size as u64;
        }
    }
    let secs = bin.as_secs_f64();
    bytes
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            (
                SimTime::from_micros((i as u64 + 1) * bin.as_micros()),
                b as f64 * 8.0 / secs,
            )
        })
        .collect()
}

/// Flat `key=value` summary of a run.
pub fn summary(log: &MetricsLog) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "duration_s={:.3}", log.duration.as_secs_f64());
    let _ = writeln!(out, "packets_sent={}", log.sent);
    let _ = writeln!(out, "packets_delivered={}", log.deliveries.len());
    let _ = writeln!(out, "packets_dropped={}", log.drops.len());
    for (i, h) in log.hops.iter().enumerate() {
        let util = utilization(log, i).unwrap_or(0.0);
        let _ = writeln!(out, "hop.{}.name={}", i, h.name);
        let _ = writeln!(out, "hop.{}.utilization={:.4}", i, util);
        for (label, p) in [("p50", 0.5), ("p95", 0.95), ("p99", 0.99)] {
            if let Ok(d) = delay_percentile(log, i, p) {
                let _ = writeln!(out, "hop.{}.delay_{}_ms={:.3}", i, label, d.as_millis_f64());
            }
        }
        let _ = writeln!(out, "hop.{}.drops={}", i, h.drops);
    }
    let long: Vec<&FlowLog> = log.flows.iter().filter(|f| !f.short).collect();
    let from = SimTime::from_micros(log.duration.as_micros() / 3);
    let rates: Vec<f64> = long.iter().map(|f| throughput(log, f.id, from, log.duration)).collect();
    for (f, r) in long.iter().zip(&rates) {
        let _ = writeln!(out, "flow.{}.kind={}", f.id, f.kind.name());
        let _ = writeln!(out, "flow.{}.throughput_mbps={:.4}", f.id, r / 1e6);
    }
    if let Ok(j) = jain_index(&rates) {
        let _ = writeln!(out, "jain_index={:.4}", j);
    }
    let fcts: Vec<f64> = log
        .flows
        .iter()
        .filter(|f| f.short)
        .filter_map(|f| f.completion.map(|c| (c - f.start).as_millis_f64()))
        .collect();
    if !fcts.is_empty() {
        let _ = writeln!(out, "short_flows_completed={}", fcts.len());
        let _ = writeln!(
            out,
            "short_flow_mean_fct_ms={:.3}",
            fcts.iter().sum::<f64>() / fcts.len() as f64
        );
    }
    out
}
