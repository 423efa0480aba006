//! Discrete-event scheduler wiring senders, a chain of router hops and
//! receivers together.
//!
//! Every flow crosses every hop in order. Each hop owns a link whose delivery
//! opportunities pace its dequeues; a hop serves at most one packet per
//! opportunity. ACKs return over a pure-delay path.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abc_router::{AbcRouter, AbcRouterConfig, ParamError, QueueKind};
use crate::abc_sender::{AbcSender, AbcSenderConfig};
use crate::legacy::{CubicSender, DroptailRouter, LegacyEcn, ShortFlowGenerator};
use crate::links::LinkProcess;
use crate::metrics::{Delivery, DropRecord, FlowKind, FlowLog, FlowSample, HopLog, HopRecord, MetricsLog};
use crate::receiver::{EchoState, DEFAULT_ACK_DELAY, DEFAULT_COALESCE};
use crate::types::{Ack, FlowId, Packet, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("topology has no hops")]
    NoHops,
    #[error("hop {0} has no link capacity process")]
    MissingLink(usize),
    #[error("hop {hop}: {source}")]
    Router { hop: usize, source: ParamError },
    #[error("hop {0}: buffer must hold at least one packet")]
    Buffer(usize),
    #[error("flow {flow}: rtt {rtt} is shorter than twice the one-way hop delays {hops}")]
    RttTooShort { flow: usize, rtt: SimTime, hops: SimTime },
    #[error("flow {0}: ACK coalescing count must be at least 1")]
    Coalesce(usize),
    #[error("sample interval must be positive")]
    SampleInterval,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QueueSpec {
    Abc(AbcRouterConfig),
    Droptail {
        buffer: usize,
        ecn_threshold: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct HopSpec {
    pub name: String,
    pub link: Option<LinkProcess>,
    pub queue: QueueSpec,
    /// Propagation delay from this hop to the next node downstream.
    pub delay: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SenderSpec {
    Abc(AbcSenderConfig),
    Cubic { ecn: LegacyEcn, initial_window: f64 },
}

impl SenderSpec {
    pub fn cubic() -> Self {
        SenderSpec::Cubic {
            ecn: LegacyEcn::Off,
            initial_window: 10.0,
        }
    }

    fn kind(&self) -> FlowKind {
        match self {
            SenderSpec::Abc(_) => FlowKind::Abc,
            SenderSpec::Cubic { .. } => FlowKind::Cubic,
        }
    }

    fn build(&self, flow: FlowId, size: Option<u64>) -> Sender {
        match *self {
            SenderSpec::Abc(cfg) => Sender::Abc(AbcSender::new(flow, cfg, size)),
            SenderSpec::Cubic { ecn, initial_window } => {
                Sender::Cubic(CubicSender::new(flow, initial_window, ecn, size))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowSpec {
    pub sender: SenderSpec,
    /// Round-trip propagation delay.
    pub rtt: SimTime,
    pub start: SimTime,
    pub stop: Option<SimTime>,
    /// Bytes to send; `None` is backlogged.
    pub size: Option<u64>,
    pub coalesce: u32,
    pub ack_delay: SimTime,
}

impl FlowSpec {
    pub fn new(sender: SenderSpec, rtt: SimTime) -> Self {
        FlowSpec {
            sender,
            rtt,
            start: SimTime::ZERO,
            stop: None,
            size: None,
            coalesce: DEFAULT_COALESCE,
            ack_delay: DEFAULT_ACK_DELAY,
        }
    }

    pub fn abc(rtt: SimTime) -> Self {
        FlowSpec::new(SenderSpec::Abc(AbcSenderConfig::default()), rtt)
    }

    pub fn cubic(rtt: SimTime) -> Self {
        FlowSpec::new(SenderSpec::cubic(), rtt)
    }

    pub fn starting_at(mut self, t: SimTime) -> Self {
        self.start = t;
        self
    }

    pub fn stopping_at(mut self, t: SimTime) -> Self {
        self.stop = Some(t);
        self
    }
}

/// Poisson arrivals of finite flows, each otherwise configured like `template`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShortFlowSpec {
    pub generator: ShortFlowGenerator,
    pub template: FlowSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub hops: Vec<HopSpec>,
    pub flows: Vec<FlowSpec>,
    pub short_flows: Vec<ShortFlowSpec>,
    /// Period of sender window snapshots and router weight samples.
    pub sample_interval: SimTime,
    /// Keep every ABC marking decision in the log.
    pub trace_routers: bool,
    /// Upper bound of a uniform random delay added to each packet between
    /// its sender and the first hop. A flow's packets stay in order.
    pub send_jitter: SimTime,
}

impl Topology {
    pub fn new(hops: Vec<HopSpec>, flows: Vec<FlowSpec>) -> Self {
        Topology {
            hops,
            flows,
            short_flows: Vec::new(),
            sample_interval: SimTime::from_millis(10),
            trace_routers: false,
            send_jitter: SimTime::ZERO,
        }
    }

    /// One hop with default ABC router parameters.
    pub fn single_abc(link: LinkProcess, flows: Vec<FlowSpec>) -> Self {
        Topology::new(
            vec![HopSpec {
                name: "abc".into(),
                link: Some(link),
                queue: QueueSpec::Abc(AbcRouterConfig::default()),
                delay: SimTime::ZERO,
            }],
            flows,
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hops.is_empty() {
            return Err(ConfigError::NoHops);
        }
        if self.sample_interval == SimTime::ZERO {
            return Err(ConfigError::SampleInterval);
        }
        for (i, h) in self.hops.iter().enumerate() {
            if h.link.is_none() {
                return Err(ConfigError::MissingLink(i));
            }
            match &h.queue {
                QueueSpec::Abc(cfg) => cfg
                    .validate()
                    .map_err(|source| ConfigError::Router { hop: i, source })?,
                QueueSpec::Droptail { buffer, .. } if *buffer == 0 => return Err(ConfigError::Buffer(i)),
                QueueSpec::Droptail { .. } => {}
            }
        }
        let hop_delay = self.hop_delay();
        let templates = self.flows.iter().chain(self.short_flows.iter().map(|s| &s.template));
        for (i, f) in templates.enumerate() {
            if f.rtt.as_micros() / 2 < hop_delay.as_micros() {
                return Err(ConfigError::RttTooShort {
                    flow: i,
                    rtt: f.rtt,
                    hops: hop_delay,
                });
            }
            if f.coalesce == 0 {
                return Err(ConfigError::Coalesce(i));
            }
        }
        Ok(())
    }

    fn hop_delay(&self) -> SimTime {
        self.hops.iter().fold(SimTime::ZERO, |a, h| a + h.delay)
    }
}

/// Where an event is delivered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeId {
    Sender(FlowId),
    Hop(usize),
    Receiver(FlowId),
    /// Bookkeeping events (periodic sampling).
    Engine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimerTag {
    FlowStart,
    FlowStop,
    /// Delayed-ACK expiry, valid only if the receiver has emitted exactly
    /// this many ACKs since it was armed.
    DelayedAck(u64),
    Retransmit,
    WeightUpdate,
    Sample,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    PacketArrival(Packet),
    AckArrival(Ack),
    DequeueOpportunity,
    Timer(TimerTag),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub fire_time: SimTime,
    pub target: NodeId,
    pub kind: EventKind,
}

struct Scheduled {
    key: (SimTime, u64),
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap and we want the earliest event,
    // ties broken by insertion order.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.cmp(&self.key)
    }
}

/// A sender of either kind.
#[derive(Clone, Debug)]
pub enum Sender {
    Abc(AbcSender),
    Cubic(CubicSender),
}

impl Sender {
    pub fn on_ack(&mut self, now: SimTime, ack: &Ack) {
        match self {
            Sender::Abc(s) => s.on_ack(now, ack),
            Sender::Cubic(s) => s.on_ack(now, ack),
        }
    }

    pub fn poll_transmit(&mut self, now: SimTime) -> Option<Packet> {
        match self {
            Sender::Abc(s) => s.poll_transmit(now),
            Sender::Cubic(s) => s.poll_transmit(now),
        }
    }

    pub fn timer_deadline(&self) -> Option<SimTime> {
        match self {
            Sender::Abc(s) => s.timer_deadline(),
            Sender::Cubic(s) => s.timer_deadline(),
        }
    }

    pub fn on_timer(&mut self, now: SimTime) -> bool {
        match self {
            Sender::Abc(s) => s.on_timer(now),
            Sender::Cubic(s) => s.on_timer(now),
        }
    }

    pub fn is_complete(&self) -> bool {
        match self {
            Sender::Abc(s) => s.is_complete(),
            Sender::Cubic(s) => s.is_complete(),
        }
    }

    pub fn inflight(&self) -> usize {
        match self {
            Sender::Abc(s) => s.inflight(),
            Sender::Cubic(s) => s.inflight(),
        }
    }

    fn sample(&self, time: SimTime, delivered_bytes: u64) -> FlowSample {
        match self {
            Sender::Abc(s) => FlowSample {
                time,
                w_abc: Some(s.w_abc()),
                w_cubic: s.cubic.cwnd,
                inflight: s.inflight(),
                delivered_bytes,
            },
            Sender::Cubic(s) => FlowSample {
                time,
                w_abc: None,
                w_cubic: s.window(),
                inflight: s.inflight(),
                delivered_bytes,
            },
        }
    }
}

enum Queue {
    Abc(Box<AbcRouter>),
    Droptail(DroptailRouter),
}

impl Queue {
    fn len(&self) -> usize {
        match self {
            Queue::Abc(r) => r.len(),
            Queue::Droptail(r) => r.len(),
        }
    }
}

struct Hop {
    link: LinkProcess,
    queue: Queue,
    delay: SimTime,
    dequeue_pending: bool,
    last_used: Option<SimTime>,
    log: HopLog,
}

struct Flow {
    sender: Sender,
    receiver: EchoState,
    access_delay: SimTime,
    /// Latest first-hop arrival scheduled so far, to keep jittered packets
    /// in order.
    last_arrival: SimTime,
    reverse_delay: SimTime,
    ack_delay: SimTime,
    active: bool,
    rto_armed: Option<SimTime>,
    log: FlowLog,
}

/// Packet accounting at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Conservation {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    /// On a wire between nodes.
    pub in_flight: u64,
    /// Waiting in a router queue.
    pub queued: u64,
}

impl Conservation {
    pub fn holds(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight + self.queued
    }
}

pub struct Simulation {
    now: SimTime,
    end: SimTime,
    next_seq: u64,
    events: BinaryHeap<Scheduled>,
    hops: Vec<Hop>,
    flows: Vec<Flow>,
    sample_interval: SimTime,
    trace_routers: bool,
    send_jitter: SimTime,
    jitter_rng: ChaCha8Rng,
    counts: Conservation,
    deliveries: Vec<Delivery>,
    drops: Vec<DropRecord>,
}

impl Simulation {
    pub fn new(topology: &Topology, duration: SimTime, seed: u64) -> Result<Self, ConfigError> {
        topology.validate()?;
        let hops: Vec<Hop> = topology
            .hops
            .iter()
            .map(|h| {
                let link = h.link.clone().expect("validated");
                let queue = match &h.queue {
                    QueueSpec::Abc(cfg) => Queue::Abc(Box::new(AbcRouter::new(cfg))),
                    QueueSpec::Droptail { buffer, ecn_threshold } => {
                        Queue::Droptail(DroptailRouter::new(*buffer, *ecn_threshold))
                    }
                };
                Hop {
                    log: HopLog {
                        name: h.name.clone(),
                        link: link.clone(),
                        records: Vec::new(),
                        drops: 0,
                        trace: Vec::new(),
                        weights: Vec::new(),
                    },
                    link,
                    queue,
                    delay: h.delay,
                    dequeue_pending: false,
                    last_used: None,
                }
            })
            .collect();

        let mut sim = Simulation {
            now: SimTime::ZERO,
            end: duration,
            next_seq: 0,
            events: BinaryHeap::new(),
            hops,
            flows: Vec::new(),
            sample_interval: topology.sample_interval,
            trace_routers: topology.trace_routers,
            send_jitter: topology.send_jitter,
            // Stream 0 is jitter; short-flow generators take streams 1 and up.
            jitter_rng: ChaCha8Rng::seed_from_u64(seed),
            counts: Conservation::default(),
            deliveries: Vec::new(),
            drops: Vec::new(),
        };

        let hop_delay = topology.hop_delay();
        for spec in &topology.flows {
            sim.add_flow(spec, spec.start, false, hop_delay);
        }
        // Each generator draws from its own stream of the run's seed.
        for (i, short) in topology.short_flows.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let end = short.template.stop.unwrap_or(duration).min(duration);
            for at in short.generator.schedule(short.template.start, end, &mut rng) {
                let mut spec = short.template.clone();
                spec.size = Some(short.generator.flow_bytes);
                spec.stop = None;
                sim.add_flow(&spec, at, true, hop_delay);
            }
        }

        for h in 0..sim.hops.len() {
            if let Some(p) = sim.abc_router(h).and_then(AbcRouter::weight_period) {
                sim.push_later(p, NodeId::Hop(h), EventKind::Timer(TimerTag::WeightUpdate));
            }
        }
        sim.push_later(SimTime::ZERO, NodeId::Engine, EventKind::Timer(TimerTag::Sample));
        Ok(sim)
    }

    fn add_flow(&mut self, spec: &FlowSpec, start: SimTime, short: bool, hop_delay: SimTime) {
        let id = FlowId(self.flows.len() as u32);
        let access_delay = SimTime::from_micros(spec.rtt.as_micros() / 2) - hop_delay;
        let reverse_delay = spec.rtt - access_delay - hop_delay;
        self.flows.push(Flow {
            sender: spec.sender.build(id, spec.size),
            receiver: EchoState::new(id, spec.coalesce),
            access_delay,
            last_arrival: SimTime::ZERO,
            reverse_delay,
            ack_delay: spec.ack_delay,
            active: false,
            rto_armed: None,
            log: FlowLog {
                id,
                kind: spec.sender.kind(),
                short,
                start,
                size: spec.size,
                completion: None,
                delivered_bytes: 0,
                samples: Vec::new(),
            },
        });
        self.push_at(start, NodeId::Sender(id), EventKind::Timer(TimerTag::FlowStart));
        if let Some(stop) = spec.stop {
            self.push_at(stop, NodeId::Sender(id), EventKind::Timer(TimerTag::FlowStop));
        }
    }

    fn push_at(&mut self, fire_time: SimTime, target: NodeId, kind: EventKind) {
        let key = (fire_time, self.next_seq);
        self.next_seq += 1;
        self.events.push(Scheduled {
            key,
            event: Event {
                fire_time,
                target,
                kind,
            },
        });
    }

    fn push_later(&mut self, after: SimTime, target: NodeId, kind: EventKind) {
        self.push_at(self.now + after, target, kind);
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn conservation(&self) -> Conservation {
        Conservation {
            queued: self.hops.iter().map(|h| h.queue.len() as u64).sum(),
            ..self.counts
        }
    }

    pub fn sender(&self, flow: FlowId) -> &Sender {
        &self.flows[flow.0 as usize].sender
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn abc_router(&self, hop: usize) -> Option<&AbcRouter> {
        match &self.hops.get(hop)?.queue {
            Queue::Abc(r) => Some(r),
            Queue::Droptail(_) => None,
        }
    }

    /// Processes the next event if it fires before the end of the run.
    pub fn step(&mut self) -> Option<SimTime> {
        if self.events.peek()?.key.0 >= self.end {
            return None;
        }
        let Scheduled { event, .. } = self.events.pop()?;
        debug_assert!(event.fire_time >= self.now);
        self.now = event.fire_time;
        self.dispatch(event);
        Some(self.now)
    }

    pub fn run_to_end(&mut self) {
        while self.step().is_some() {}
    }

    fn dispatch(&mut self, ev: Event) {
        match (ev.target, ev.kind) {
            (NodeId::Hop(h), EventKind::PacketArrival(pkt)) => self.hop_arrival(h, pkt),
            (NodeId::Hop(h), EventKind::DequeueOpportunity) => self.hop_dequeue(h),
            (NodeId::Hop(h), EventKind::Timer(TimerTag::WeightUpdate)) => self.weight_update(h),
            (NodeId::Receiver(f), EventKind::PacketArrival(pkt)) => self.receive(f, pkt),
            (NodeId::Receiver(f), EventKind::Timer(TimerTag::DelayedAck(gen))) => self.ack_timer(f, gen),
            (NodeId::Sender(f), EventKind::AckArrival(ack)) => self.sender_ack(f, ack),
            (NodeId::Sender(f), EventKind::Timer(TimerTag::FlowStart)) => {
                self.flows[f.0 as usize].active = true;
                self.pump(f);
            }
            (NodeId::Sender(f), EventKind::Timer(TimerTag::FlowStop)) => {
                self.flows[f.0 as usize].active = false;
            }
            (NodeId::Sender(f), EventKind::Timer(TimerTag::Retransmit)) => self.rto(f),
            (NodeId::Engine, EventKind::Timer(TimerTag::Sample)) => self.sample(),
            (target, kind) => unreachable!("event {kind:?} has no handler at {target:?}"),
        }
    }

    fn pump(&mut self, f: FlowId) {
        let now = self.now;
        let flow = &mut self.flows[f.0 as usize];
        if !flow.active {
            return;
        }
        let mut out = Vec::new();
        while let Some(pkt) = flow.sender.poll_transmit(now) {
            let mut at = now + flow.access_delay;
            if self.send_jitter > SimTime::ZERO {
                at += SimTime::from_micros(self.jitter_rng.random_range(0..=self.send_jitter.as_micros()));
            }
            at = at.max(flow.last_arrival);
            flow.last_arrival = at;
            out.push((at, pkt));
        }
        self.counts.sent += out.len() as u64;
        self.counts.in_flight += out.len() as u64;
        for (at, pkt) in out {
            self.push_at(at, NodeId::Hop(0), EventKind::PacketArrival(pkt));
        }
        self.arm_rto(f);
    }

    fn arm_rto(&mut self, f: FlowId) {
        let flow = &mut self.flows[f.0 as usize];
        let Some(deadline) = flow.sender.timer_deadline() else {
            return;
        };
        if flow.rto_armed.is_some_and(|t| t <= deadline) {
            return;
        }
        flow.rto_armed = Some(deadline);
        self.push_at(deadline, NodeId::Sender(f), EventKind::Timer(TimerTag::Retransmit));
    }

    fn rto(&mut self, f: FlowId) {
        let now = self.now;
        let flow = &mut self.flows[f.0 as usize];
        if flow.rto_armed != Some(now) {
            return;
        }
        flow.rto_armed = None;
        flow.sender.on_timer(now);
        self.pump(f);
        self.arm_rto(f);
    }

    fn hop_arrival(&mut self, h: usize, pkt: Packet) {
        let now = self.now;
        self.counts.in_flight -= 1;
        let hop = &mut self.hops[h];
        let rejected = match &mut hop.queue {
            Queue::Abc(r) => r.enqueue(pkt, now).err(),
            Queue::Droptail(r) => r.enqueue(pkt, now).err(),
        };
        if let Some(p) = rejected {
            hop.log.drops += 1;
            self.counts.dropped += 1;
            self.drops.push(DropRecord {
                time: now,
                hop: h,
                flow: p.flow,
                seq: p.seq,
            });
            return;
        }
        self.schedule_dequeue(h);
    }

    fn schedule_dequeue(&mut self, h: usize) {
        let now = self.now;
        let hop = &mut self.hops[h];
        if hop.dequeue_pending || hop.queue.len() == 0 {
            return;
        }
        // An opportunity serves one packet only.
        let from = match hop.last_used {
            Some(u) if u >= now => u + SimTime::from_micros(1),
            _ => now,
        };
        let at = hop.link.next_delivery(from);
        if at == SimTime::MAX {
            return;
        }
        hop.dequeue_pending = true;
        self.push_at(at, NodeId::Hop(h), EventKind::DequeueOpportunity);
    }

    fn hop_dequeue(&mut self, h: usize) {
        let now = self.now;
        let trace = self.trace_routers;
        let hop = &mut self.hops[h];
        hop.dequeue_pending = false;
        hop.last_used = Some(now);
        let out = match &mut hop.queue {
            Queue::Abc(r) => r.on_dequeue(now, &hop.link).map(|(p, rec)| {
                if trace && rec.queue == QueueKind::Abc {
                    hop.log.trace.push(rec);
                }
                p
            }),
            Queue::Droptail(r) => r.dequeue(now),
        };
        if let Some(pkt) = out {
            hop.log.records.push(HopRecord {
                flow: pkt.flow,
                seq: pkt.seq,
                size: pkt.size,
                enqueue: pkt.enqueue_time,
                dequeue: now,
            });
            let delay = hop.delay;
            self.counts.in_flight += 1;
            let target = if h + 1 < self.hops.len() {
                NodeId::Hop(h + 1)
            } else {
                NodeId::Receiver(pkt.flow)
            };
            self.push_later(delay, target, EventKind::PacketArrival(pkt));
        }
        self.schedule_dequeue(h);
    }

    fn weight_update(&mut self, h: usize) {
        let now = self.now;
        let hop = &mut self.hops[h];
        if let Queue::Abc(r) = &mut hop.queue {
            r.refresh_weights(now, &hop.link);
            if let Some(p) = r.weight_period() {
                self.push_later(p, NodeId::Hop(h), EventKind::Timer(TimerTag::WeightUpdate));
            }
        }
    }

    fn receive(&mut self, f: FlowId, pkt: Packet) {
        let now = self.now;
        self.counts.in_flight -= 1;
        self.counts.delivered += 1;
        self.deliveries.push(Delivery {
            flow: f,
            seq: pkt.seq,
            size: pkt.size,
            send_time: pkt.send_time,
            recv_time: now,
        });
        let flow = &mut self.flows[f.0 as usize];
        flow.log.delivered_bytes += pkt.size as u64;
        let acks = flow.receiver.on_packet(&pkt);
        let reverse = flow.reverse_delay;
        let ack_delay = flow.ack_delay;
        let pending = flow.receiver.pending() > 0;
        let gen = flow.receiver.emitted();
        for ack in acks {
            self.push_later(reverse, NodeId::Sender(f), EventKind::AckArrival(ack));
        }
        if pending {
            self.push_later(
                ack_delay,
                NodeId::Receiver(f),
                EventKind::Timer(TimerTag::DelayedAck(gen)),
            );
        }
    }

    fn ack_timer(&mut self, f: FlowId, gen: u64) {
        let flow = &mut self.flows[f.0 as usize];
        if flow.receiver.emitted() != gen {
            return;
        }
        if let Some(ack) = flow.receiver.flush() {
            let reverse = flow.reverse_delay;
            self.push_later(reverse, NodeId::Sender(f), EventKind::AckArrival(ack));
        }
    }

    fn sender_ack(&mut self, f: FlowId, ack: Ack) {
        let now = self.now;
        let flow = &mut self.flows[f.0 as usize];
        flow.sender.on_ack(now, &ack);
        if flow.log.completion.is_none() && flow.sender.is_complete() {
            flow.log.completion = Some(now);
        }
        self.pump(f);
    }

    fn sample(&mut self) {
        let now = self.now;
        for flow in self.flows.iter_mut().filter(|f| !f.log.short) {
            let s = flow.sender.sample(now, flow.log.delivered_bytes);
            flow.log.samples.push(s);
        }
        for hop in &mut self.hops {
            if let Queue::Abc(r) = &hop.queue {
                if r.weight_period().is_some() {
                    hop.log.weights.push((now, r.weight_abc()));
                }
            }
        }
        self.push_later(self.sample_interval, NodeId::Engine, EventKind::Timer(TimerTag::Sample));
    }

    pub fn finish(self) -> MetricsLog {
        MetricsLog {
            duration: self.end,
            sent: self.counts.sent,
            hops: self.hops.into_iter().map(|h| h.log).collect(),
            deliveries: self.deliveries,
            drops: self.drops,
            flows: self.flows.into_iter().map(|f| f.log).collect(),
        }
    }
}

/// Runs a topology for `duration` and returns everything it logged.
pub fn run(topology: &Topology, duration: SimTime, seed: u64) -> Result<MetricsLog, ConfigError> {
    let mut sim = Simulation::new(topology, duration, seed)?;
    sim.run_to_end();
    Ok(sim.finish())
}
