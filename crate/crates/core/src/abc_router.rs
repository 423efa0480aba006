//! The accel/brake router queueing discipline.
//!
//! On every dequeue from the ABC queue the router recomputes a target rate
//! from the link capacity and the queuing delay, turns it into the fraction
//! of packets that should stay marked accelerate given the measured dequeue
//! rate, and applies that fraction with a token bucket. ABC and legacy
//! traffic sit in separate queues served by deficit round robin, with the
//! weights set from a max-min fair allocation over per-flow rate estimates.

use std::collections::VecDeque;

use thiserror::Error;

use crate::links::{LinkProcess, OracleRateView};
use crate::topk::SpaceSaving;
use crate::types::{EcnCodepoint, FlowId, Packet, SimTime, MTU};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("eta must lie in (0, 1), got {0}")]
    Eta(f64),
    #[error("delta must be positive")]
    Delta,
    #[error("measurement window must be positive")]
    Window,
    #[error("token limit must be at least 1, got {0}")]
    TokenLimit(f64),
    #[error("buffer must hold at least one packet")]
    Buffer,
    #[error("queue weight must lie in [0, 1], got {0}")]
    Weight(f64),
    #[error("weight update period must be positive")]
    Period,
    #[error("top-K must be at least 1")]
    TopK,
}

/// Control-law constants of one ABC router.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbcParams {
    /// Target utilization, strictly between 0 and 1.
    pub eta: f64,
    /// Time within which queuing delay above the threshold is drained.
    pub delta: SimTime,
    /// Queuing delay tolerated before the drain term engages.
    pub delay_threshold: SimTime,
    /// Sliding window for the dequeue-rate and capacity measurements.
    pub window: SimTime,
    pub token_limit: f64,
}

impl Default for AbcParams {
    fn default() -> Self {
        AbcParams {
            eta: 0.98,
            delta: SimTime::from_millis(133),
            delay_threshold: SimTime::from_millis(50),
            window: OracleRateView::CELLULAR_WINDOW,
            token_limit: 2.0,
        }
    }
}

impl AbcParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(ParamError::Eta(self.eta));
        }
        if self.delta == SimTime::ZERO {
            return Err(ParamError::Delta);
        }
        if self.window == SimTime::ZERO {
            return Err(ParamError::Window);
        }
        if self.token_limit.is_nan() || self.token_limit < 1.0 {
            return Err(ParamError::TokenLimit(self.token_limit));
        }
        Ok(())
    }
}

/// `eta * mu - (mu / delta) * (x - d_t)+`, clamped at zero. Rates in bits/s.
pub fn target_rate(params: &AbcParams, mu: f64, x: SimTime) -> f64 {
    let excess = x.saturating_sub(params.delay_threshold).as_secs_f64();
    let raw = params.eta * mu - mu / params.delta.as_secs_f64() * excess;
    raw.max(0.0)
}

/// Fraction of dequeued packets to leave marked accelerate so that the
/// enqueue rate one RTT later, `2 * cr * f`, meets `tr`.
pub fn accel_fraction(tr: f64, cr: f64) -> f64 {
    if cr <= 0.0 {
        return 1.0;
    }
    (0.5 * tr / cr).clamp(0.0, 1.0)
}

/// Bytes dequeued over the trailing window `(now - T, now]`.
#[derive(Clone, Debug)]
pub struct RateWindow {
    window: SimTime,
    records: VecDeque<(SimTime, u32)>,
    bytes: u64,
}

impl RateWindow {
    pub fn new(window: SimTime) -> Self {
        RateWindow {
            window,
            records: VecDeque::new(),
            bytes: 0,
        }
    }

    fn evict(&mut self, now: SimTime) {
        if now < self.window {
            return;
        }
        let cutoff = now - self.window;
        while let Some(&(t, b)) = self.records.front() {
            if t > cutoff {
                break;
            }
            self.records.pop_front();
            self.bytes -= b as u64;
        }
    }

    pub fn record(&mut self, now: SimTime, bytes: u32) {
        self.evict(now);
        self.records.push_back((now, bytes));
        self.bytes += bytes as u64;
    }

    /// Dequeue rate in bits/s.
    pub fn rate_bps(&mut self, now: SimTime) -> f64 {
        self.evict(now);
        self.bytes as f64 * 8.0 / self.window.as_secs_f64()
    }
}

/// Deterministic accel/brake marker: a token bucket filled by `f` on every
/// outgoing packet and drained by one for every accelerate it lets through.
#[derive(Clone, Debug, PartialEq)]
pub struct Marker {
    token: f64,
    limit: f64,
}

impl Marker {
    pub fn new(token_limit: f64) -> Self {
        Marker {
            token: 0.0,
            limit: token_limit,
        }
    }

    pub fn token(&self) -> f64 {
        self.token
    }

    /// Returns the outgoing codepoint. Only `Accel` can change, and only to
    /// `Brake`; packets already carrying ECN state pass through.
    pub fn mark(&mut self, ecn: EcnCodepoint, f: f64) -> EcnCodepoint {
        self.token = (self.token + f).min(self.limit);
        match ecn {
            EcnCodepoint::Accel if self.token > 1.0 => {
                self.token -= 1.0;
                EcnCodepoint::Accel
            }
            EcnCodepoint::Accel => EcnCodepoint::Brake,
            other => other,
        }
    }

    pub fn mark_packet(&mut self, pkt: &mut Packet, f: f64) {
        pkt.ecn = self.mark(pkt.ecn, f);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QueueKind {
    Abc,
    Legacy,
}

impl QueueKind {
    fn idx(self) -> usize {
        match self {
            QueueKind::Abc => 0,
            QueueKind::Legacy => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            QueueKind::Abc => "abc",
            QueueKind::Legacy => "legacy",
        }
    }
}

/// Two FIFOs sharing one packet budget, served by deficit round robin with
/// quanta proportional to `(weight_abc, 1 - weight_abc)`.
#[derive(Clone, Debug)]
pub struct DualQueue {
    queues: [VecDeque<Packet>; 2],
    capacity: usize,
    weight_abc: f64,
    deficits: [f64; 2],
    current: usize,
}

/// Bytes handed out per DRR round across both queues.
const DRR_ROUND_BYTES: f64 = 2.0 * MTU as f64;
/// Smallest quantum, as a fraction of a round, so a tiny weight still makes
/// progress in a bounded number of iterations.
const MIN_QUANTUM_SHARE: f64 = 0.01;

impl DualQueue {
    pub fn new(capacity: usize, weight_abc: f64) -> Self {
        DualQueue {
            queues: [VecDeque::new(), VecDeque::new()],
            capacity,
            weight_abc: weight_abc.clamp(0.0, 1.0),
            deficits: [0.0; 2],
            current: 0,
        }
    }

    pub fn weight_abc(&self) -> f64 {
        self.weight_abc
    }

    pub fn set_weight_abc(&mut self, w: f64) {
        self.weight_abc = w.clamp(0.0, 1.0);
    }

    pub fn len(&self) -> usize {
        self.queues[0].len() + self.queues[1].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn queue_len(&self, kind: QueueKind) -> usize {
        self.queues[kind.idx()].len()
    }

    pub fn head(&self, kind: QueueKind) -> Option<&Packet> {
        self.queues[kind.idx()].front()
    }

    /// When the shared budget is full, an ABC arrival pushes out the legacy
    /// tail if there is one; anything else is tail-dropped. `Err` carries the
    /// packet that was lost.
    pub fn enqueue(&mut self, kind: QueueKind, pkt: Packet) -> Result<(), Packet> {
        if self.len() < self.capacity {
            self.queues[kind.idx()].push_back(pkt);
            return Ok(());
        }
        if kind == QueueKind::Legacy {
            return Err(pkt);
        }
        let legacy = QueueKind::Legacy.idx();
        match self.queues[legacy].pop_back() {
            Some(evicted) => {
                if self.queues[legacy].is_empty() {
                    self.deficits[legacy] = 0.0;
                }
                self.queues[kind.idx()].push_back(pkt);
                Err(evicted)
            }
            None => Err(pkt),
        }
    }

    fn quantum(&self, q: usize) -> f64 {
        let share = if q == 0 { self.weight_abc } else { 1.0 - self.weight_abc };
        share.max(MIN_QUANTUM_SHARE) * DRR_ROUND_BYTES
    }

    fn pop(&mut self, q: usize) -> (QueueKind, Packet) {
        let pkt = self.queues[q].pop_front().expect("non-empty");
        if self.queues[q].is_empty() {
            self.deficits[q] = 0.0;
        }
        let kind = if q == 0 { QueueKind::Abc } else { QueueKind::Legacy };
        (kind, pkt)
    }

    pub fn dequeue(&mut self) -> Option<(QueueKind, Packet)> {
        match (self.queues[0].is_empty(), self.queues[1].is_empty()) {
            (true, true) => return None,
            (false, true) => return Some(self.pop(0)),
            (true, false) => return Some(self.pop(1)),
            (false, false) => {}
        }
        loop {
            let q = self.current;
            let head = self.queues[q].front().expect("both backlogged").size as f64;
            if self.deficits[q] >= head {
                self.deficits[q] -= head;
                return Some(self.pop(q));
            }
            self.current = 1 - q;
            self.deficits[self.current] += self.quantum(self.current);
        }
    }
}

/// Water-filling max-min fair allocation of `capacity` over `demands`.
/// Allocations are returned in input order.
pub fn max_min_allocation(demands: &[f64], capacity: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..demands.len()).collect();
    order.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]).then(a.cmp(&b)));
    let mut alloc = vec![0.0; demands.len()];
    let mut satisfied = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let remaining = order.len() - rank;
        let level = (capacity - satisfied) / remaining as f64;
        if demands[i] <= level {
            alloc[i] = demands[i];
            satisfied += demands[i];
        } else {
            for &j in &order[rank..] {
                alloc[j] = level;
            }
            break;
        }
    }
    alloc
}

/// Per-queue rate measurements feeding the weight computation, in bits/s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowRateTable {
    pub abc_top: Vec<f64>,
    pub abc_short: f64,
    pub legacy_top: Vec<f64>,
    pub legacy_short: f64,
}

/// Weight of the ABC queue: its flows' share of the max-min fair allocation.
/// The share is taken of the total allocation, which equals `capacity`
/// whenever demand saturates the link.
///
/// Tracked flows are assumed able to grow by `headroom` (the X of the
/// allocation rule); short-flow aggregates demand exactly what they carry.
/// An aggregate stands for many flows that are each far below the fair
/// level, so it is satisfied before water-filling the tracked flows (scaled
/// down pro rata if the aggregates alone exceed `capacity`).
/// Returns `None` when neither queue carried traffic.
pub fn update_weights(table: &FlowRateTable, capacity: f64, headroom: f64) -> Option<f64> {
    if capacity <= 0.0 {
        return None;
    }
    let shorts = [table.abc_short.max(0.0), table.legacy_short.max(0.0)];
    let short_total = shorts[0] + shorts[1];
    let short_alloc = if short_total > capacity {
        shorts.map(|s| s * (capacity / short_total))
    } else {
        shorts
    };
    let remaining = (capacity - short_alloc[0] - short_alloc[1]).max(0.0);

    let mut demands = Vec::new();
    let mut is_abc = Vec::new();
    for (rates, abc) in [(&table.abc_top, true), (&table.legacy_top, false)] {
        for &r in rates {
            if r > 0.0 {
                demands.push(r * (1.0 + headroom));
                is_abc.push(abc);
            }
        }
    }
    if demands.is_empty() && short_total == 0.0 {
        return None;
    }
    let alloc = max_min_allocation(&demands, remaining);
    let tracked_abc: f64 = alloc.iter().zip(&is_abc).filter(|(_, &a)| a).map(|(x, _)| *x).sum();
    let abc = short_alloc[0] + tracked_abc;
    let total = short_alloc[0] + short_alloc[1] + alloc.iter().sum::<f64>();
    if total <= 0.0 {
        return None;
    }
    Some((abc / total).clamp(0.0, 1.0))
}

/// Dual-queue weighting settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightingConfig {
    pub period: SimTime,
    /// Demand headroom X granted to tracked flows.
    pub headroom: f64,
    /// Flows reported per queue as individually tracked.
    pub top_k: usize,
    /// Space Saving counters per queue, at least `top_k`. Spare counters
    /// keep churning short flows from inflating the reported counts.
    pub sketch_counters: usize,
    pub initial_weight: f64,
    /// Weights are kept inside `[min_weight, 1 - min_weight]`.
    pub min_weight: f64,
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig {
            period: SimTime::from_millis(100),
            headroom: 0.10,
            top_k: 10,
            sketch_counters: 64,
            initial_weight: 0.5,
            min_weight: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AbcRouterConfig {
    pub params: AbcParams,
    pub view: OracleRateView,
    /// Shared buffer, in packets.
    pub buffer: usize,
    /// `None` keeps a fixed weight of `1.0` on the ABC queue.
    pub weighting: Option<WeightingConfig>,
}

impl Default for AbcRouterConfig {
    fn default() -> Self {
        let params = AbcParams::default();
        AbcRouterConfig {
            params,
            view: OracleRateView::new(params.window),
            buffer: 250,
            weighting: Some(WeightingConfig::default()),
        }
    }
}

impl AbcRouterConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.params.validate()?;
        if self.buffer == 0 {
            return Err(ParamError::Buffer);
        }
        if let Some(w) = &self.weighting {
            if !(0.0..=1.0).contains(&w.initial_weight) {
                return Err(ParamError::Weight(w.initial_weight));
            }
            if !(0.0..=0.5).contains(&w.min_weight) {
                return Err(ParamError::Weight(w.min_weight));
            }
            if w.period == SimTime::ZERO {
                return Err(ParamError::Period);
            }
            if w.top_k == 0 || w.sketch_counters < w.top_k {
                return Err(ParamError::TopK);
            }
        }
        Ok(())
    }
}

/// One row of the per-dequeue router log.
#[derive(Clone, Debug, PartialEq)]
pub struct DequeueRecord {
    pub time: SimTime,
    pub queue: QueueKind,
    pub f: f64,
    pub tr: f64,
    pub cr: f64,
    pub x: SimTime,
    pub token: f64,
    /// Outgoing codepoint of an ABC packet; `None` for legacy packets.
    pub mark: Option<EcnCodepoint>,
}

#[derive(Clone, Debug)]
struct Weighting {
    cfg: WeightingConfig,
    sketches: [SpaceSaving; 2],
    epoch_bytes: [u64; 2],
    epoch_start: SimTime,
}

#[derive(Clone, Debug)]
pub struct AbcRouter {
    params: AbcParams,
    view: OracleRateView,
    queues: DualQueue,
    abc_rate: RateWindow,
    legacy_rate: RateWindow,
    marker: Marker,
    weighting: Option<Weighting>,
    /// Latest max-min share of the ABC queue, before the scheduler clamp.
    abc_share: f64,
}

impl AbcRouter {
    pub fn new(cfg: &AbcRouterConfig) -> Self {
        let weighting = cfg.weighting.map(|w| Weighting {
            cfg: w,
            sketches: [SpaceSaving::new(w.sketch_counters), SpaceSaving::new(w.sketch_counters)],
            epoch_bytes: [0; 2],
            epoch_start: SimTime::ZERO,
        });
        let initial = cfg.weighting.map_or(1.0, |w| w.initial_weight);
        AbcRouter {
            params: cfg.params,
            view: cfg.view,
            queues: DualQueue::new(cfg.buffer, initial),
            abc_rate: RateWindow::new(cfg.params.window),
            legacy_rate: RateWindow::new(cfg.params.window),
            marker: Marker::new(cfg.params.token_limit),
            weighting,
            abc_share: initial,
        }
    }

    pub fn params(&self) -> &AbcParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn queue_len(&self, kind: QueueKind) -> usize {
        self.queues.queue_len(kind)
    }

    /// Scheduler weight of the ABC queue.
    pub fn weight_abc(&self) -> f64 {
        self.queues.weight_abc()
    }

    /// Share of the link the ABC target rate is computed from.
    pub fn abc_share(&self) -> f64 {
        self.abc_share
    }

    pub fn token(&self) -> f64 {
        self.marker.token()
    }

    pub fn weight_period(&self) -> Option<SimTime> {
        self.weighting.as_ref().map(|w| w.cfg.period)
    }

    /// Head-of-line sojourn time of the ABC queue; zero when it is empty.
    pub fn queue_delay(&self, now: SimTime) -> SimTime {
        self.queues
            .head(QueueKind::Abc)
            .map_or(SimTime::ZERO, |p| now.saturating_sub(p.enqueue_time))
    }

    pub fn enqueue(&mut self, mut pkt: Packet, now: SimTime) -> Result<(), Packet> {
        pkt.enqueue_time = now;
        let kind = if pkt.abc { QueueKind::Abc } else { QueueKind::Legacy };
        self.queues.enqueue(kind, pkt)
    }

    /// Capacity the ABC queue is controlled against: its max-min share of
    /// the link. The scheduler weight is clamped away from 0 and 1 so an idle
    /// class can restart, but that floor is not handed to ABC as target.
    fn abc_capacity(&self, mu: f64) -> f64 {
        match self.weighting {
            None => mu,
            Some(_) => self.abc_share * mu,
        }
    }

    /// Dequeues the next packet at a delivery opportunity, marking ABC packets.
    pub fn on_dequeue(&mut self, now: SimTime, link: &LinkProcess) -> Option<(Packet, DequeueRecord)> {
        let (kind, mut pkt) = self.queues.dequeue()?;
        pkt.dequeue_time = now;
        if let Some(w) = self.weighting.as_mut() {
            w.sketches[kind.idx()].record(pkt.flow, pkt.size as u64);
            w.epoch_bytes[kind.idx()] += pkt.size as u64;
        }
        let record = match kind {
            QueueKind::Abc => {
                let x = now.saturating_sub(pkt.enqueue_time);
                self.abc_rate.record(now, pkt.size);
                let cr = self.abc_rate.rate_bps(now);
                let mu = self.view.capacity_bps(link, now);
                let mu_abc = self.abc_capacity(mu);
                let tr = target_rate(&self.params, mu_abc, x);
                let f = accel_fraction(tr, cr);
                self.marker.mark_packet(&mut pkt, f);
                DequeueRecord {
                    time: now,
                    queue: kind,
                    f,
                    tr,
                    cr,
                    x,
                    token: self.marker.token(),
                    mark: Some(pkt.ecn),
                }
            }
            QueueKind::Legacy => {
                self.legacy_rate.record(now, pkt.size);
                DequeueRecord {
                    time: now,
                    queue: kind,
                    f: f64::NAN,
                    tr: f64::NAN,
                    cr: self.legacy_rate.rate_bps(now),
                    x: now.saturating_sub(pkt.enqueue_time),
                    token: self.marker.token(),
                    mark: None,
                }
            }
        };
        Some((pkt, record))
    }

    /// Closes a measurement epoch and recomputes the queue weights.
    pub fn refresh_weights(&mut self, now: SimTime, link: &LinkProcess) {
        let Some(w) = self.weighting.as_mut() else {
            return;
        };
        let span = now.saturating_sub(w.epoch_start);
        if span == SimTime::ZERO {
            return;
        }
        let secs = span.as_secs_f64();
        let mut table = FlowRateTable::default();
        for (q, (top, short)) in [
            (&mut table.abc_top, &mut table.abc_short),
            (&mut table.legacy_top, &mut table.legacy_short),
        ]
        .into_iter()
        .enumerate()
        {
            let mut rates: Vec<f64> = w.sketches[q].top_rates(span).into_iter().map(|(_, r)| r).collect();
            rates.truncate(w.cfg.top_k);
            let total = w.epoch_bytes[q] as f64 * 8.0 / secs;
            *short = (total - rates.iter().sum::<f64>()).max(0.0);
            *top = rates;
        }
        let capacity = link.opportunities_in(w.epoch_start, now) as f64 * MTU as f64 * 8.0 / secs;
        if let Some(weight) = update_weights(&table, capacity, w.cfg.headroom) {
            let lo = w.cfg.min_weight;
            self.abc_share = weight;
            self.queues.set_weight_abc(weight.clamp(lo, 1.0 - lo));
        }
        for s in &mut w.sketches {
            s.reset();
        }
        w.epoch_bytes = [0; 2];
        w.epoch_start = now;
    }

    /// Rates currently tracked for one queue; exposed for logging and tests.
    pub fn tracked_flows(&self, kind: QueueKind) -> Vec<FlowId> {
        self.weighting
            .as_ref()
            .map(|w| w.sketches[kind.idx()].counters().iter().map(|c| c.flow).collect())
            .unwrap_or_default()
    }
}
