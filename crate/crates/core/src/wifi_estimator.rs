//! Wi-Fi link-rate estimation from A-MPDU / Block-ACK events, plus a
//! synthetic MAC event generator with known ground truth.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use thiserror::Error;

use crate::types::SimTime;

/// One Block-ACK.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AmpduAckEvent {
    pub time: SimTime,
    pub user: u32,
    /// Frames in the batch, `b`.
    pub batch: u32,
    /// Frame size `S` in bits.
    pub frame_bits: f64,
    /// PHY bitrate `R`.
    pub bitrate_bps: f64,
    /// Largest allowed batch, `M`.
    pub max_batch: u32,
    /// Time the batch occupied the medium, `T_IA = b S / R + h`.
    pub inter_ack: SimTime,
}

/// `b S / T_IA`.
pub fn instantaneous_rate(e: &AmpduAckEvent) -> f64 {
    e.batch as f64 * e.frame_bits / e.inter_ack.as_secs_f64()
}

/// Capacity had the batch been full: `M S / (T_IA + (M - b) S / R)`.
pub fn backlogged_projection(e: &AmpduAckEvent) -> f64 {
    let missing = (e.max_batch - e.batch) as f64 * e.frame_bits / e.bitrate_bps;
    e.max_batch as f64 * e.frame_bits / (e.inter_ack.as_secs_f64() + missing)
}

/// The filter's output for one event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub time: SimTime,
    /// Final estimate, after the cap.
    pub mu_hat: f64,
    /// Weighted average of the per-event projections, before the cap.
    pub uncapped: f64,
    /// Current dequeue rate over the window.
    pub current_rate: f64,
    pub capped: bool,
}

/// Weighted moving average of backlogged projections over a sliding window,
/// capped at twice the current dequeue rate.
///
/// Weights halve every `window / 2` of sample age.
#[derive(Clone, Debug)]
pub struct CapacityFilter {
    window: SimTime,
    samples: VecDeque<(SimTime, f64, f64, f64)>,
}

pub const DEFAULT_FILTER_WINDOW: SimTime = SimTime::from_millis(40);

impl CapacityFilter {
    pub fn new(window: SimTime) -> Self {
        assert!(window > SimTime::ZERO);
        CapacityFilter {
            window,
            samples: VecDeque::new(),
        }
    }

    /// Adds an event whose inter-ACK time is `inter_ack`, which per-user
    /// estimation may stretch beyond the event's own airtime.
    pub fn push_with(&mut self, e: &AmpduAckEvent, inter_ack: SimTime) -> Estimate {
        let adjusted = AmpduAckEvent { inter_ack, ..*e };
        let proj = backlogged_projection(&adjusted);
        self.samples
            .push_back((e.time, proj, e.batch as f64 * e.frame_bits, inter_ack.as_secs_f64()));
        if e.time >= self.window {
            let cutoff = e.time - self.window;
            while self.samples.front().is_some_and(|s| s.0 <= cutoff) {
                self.samples.pop_front();
            }
        }
        let half_life = self.window.as_secs_f64() / 2.0;
        let (mut wsum, mut acc, mut bits, mut busy) = (0.0, 0.0, 0.0, 0.0);
        for &(t, p, b, ia) in &self.samples {
            let w = (-(e.time - t).as_secs_f64() / half_life).exp2();
            wsum += w;
            acc += w * p;
            bits += b;
            busy += ia;
        }
        let uncapped = acc / wsum;
        let current_rate = bits / busy;
        let cap = 2.0 * current_rate;
        Estimate {
            time: e.time,
            mu_hat: uncapped.min(cap),
            uncapped,
            current_rate,
            capped: uncapped > cap,
        }
    }

    pub fn push(&mut self, e: &AmpduAckEvent) -> Estimate {
        self.push_with(e, e.inter_ack)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorMode {
    /// One queue for all users: every Block-ACK feeds one filter.
    Shared,
    /// One queue per user: airtime spent on other users since a user's
    /// previous Block-ACK counts as overhead for that user.
    PerUser,
}

/// Runs the filter over a stream; per-user mode returns estimates per user.
pub fn estimate_stream(events: &[AmpduAckEvent], mode: EstimatorMode, window: SimTime) -> BTreeMap<u32, Vec<Estimate>> {
    let mut out: BTreeMap<u32, Vec<Estimate>> = BTreeMap::new();
    match mode {
        EstimatorMode::Shared => {
            let mut f = CapacityFilter::new(window);
            out.insert(0, events.iter().map(|e| f.push(e)).collect());
        }
        EstimatorMode::PerUser => {
            let mut filters: BTreeMap<u32, CapacityFilter> = BTreeMap::new();
            // Airtime of other users accumulated since each user's last ACK.
            let mut foreign: BTreeMap<u32, SimTime> = BTreeMap::new();
            for e in events {
                let extra = foreign.insert(e.user, SimTime::ZERO).unwrap_or_default();
                for (&u, t) in foreign.iter_mut() {
                    if u != e.user {
                        *t += e.inter_ack;
                    }
                }
                let est = filters
                    .entry(e.user)
                    .or_insert_with(|| CapacityFilter::new(window))
                    .push_with(e, e.inter_ack + extra);
                out.entry(e.user).or_default().push(est);
            }
        }
    }
    out
}

/// Per-batch MAC overhead `h`: a log-normal shifted by a hard minimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverheadModel {
    pub mean: SimTime,
    pub std: SimTime,
    pub min: SimTime,
}

impl OverheadModel {
    pub fn constant(h: SimTime) -> Self {
        OverheadModel {
            mean: h,
            std: SimTime::ZERO,
            min: h,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let shift = self.min.as_secs_f64();
        let m = self.mean.as_secs_f64() - shift;
        let s = self.std.as_secs_f64();
        if s == 0.0 || m <= 0.0 {
            return self.mean.as_secs_f64();
        }
        let sigma2 = (1.0 + (s * s) / (m * m)).ln();
        let ln = LogNormal::new(m.ln() - sigma2 / 2.0, sigma2.sqrt()).expect("finite parameters");
        shift + ln.sample(rng)
    }
}

/// A station's link: frame size, batch limit, overhead, and PHY bitrate
/// schedule `(start, R)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WifiProfile {
    pub frame_bits: f64,
    pub max_batch: u32,
    pub overhead: OverheadModel,
    pub rates: Vec<(SimTime, f64)>,
}

impl WifiProfile {
    pub fn fixed(bitrate_bps: f64, max_batch: u32, frame_bits: f64, overhead: OverheadModel) -> Self {
        WifiProfile {
            frame_bits,
            max_batch,
            overhead,
            rates: vec![(SimTime::ZERO, bitrate_bps)],
        }
    }

    pub fn bitrate_at(&self, t: SimTime) -> f64 {
        let i = self.rates.partition_point(|&(s, _)| s <= t);
        self.rates[i.saturating_sub(1)].1
    }

    /// Throughput of a backlogged station at mean overhead.
    pub fn capacity_at(&self, t: SimTime) -> f64 {
        let ms = self.max_batch as f64 * self.frame_bits;
        ms / (ms / self.bitrate_at(t) + self.overhead.mean.as_secs_f64())
    }
}

/// One station's traffic in a generated trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Station {
    pub profile: WifiProfile,
    pub offered_load_bps: f64,
}

/// Simulates stations sharing one medium, served round robin whenever they
/// have frames queued. Frames arrive as a Poisson process at each station's
/// offered load. The medium idles when no station has frames; idle time is
/// not part of any `T_IA`.
pub fn generate_multi_user_trace(stations: &[Station], duration: SimTime, seed: u64) -> Vec<AmpduAckEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = stations.len();
    let exps: Vec<Option<Exp<f64>>> = stations
        .iter()
        .map(|s| {
            let rate = s.offered_load_bps / s.profile.frame_bits;
            (rate > 0.0).then(|| Exp::new(rate).expect("positive rate"))
        })
        .collect();
    let mut queue = vec![0u64; n];
    let mut next_arrival: Vec<f64> = exps
        .iter()
        .map(|e| e.as_ref().map_or(f64::INFINITY, |e| e.sample(&mut rng)))
        .collect();
    let end = duration.as_secs_f64();
    let mut now = 0.0;
    let mut turn = 0usize;
    let mut out = Vec::new();

    let admit = |until: f64, queue: &mut Vec<u64>, next_arrival: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for u in 0..n {
            while next_arrival[u] <= until {
                queue[u] += 1;
                next_arrival[u] += exps[u].as_ref().expect("finite arrival").sample(rng);
            }
        }
    };

    while now < end {
        admit(now, &mut queue, &mut next_arrival, &mut rng);
        let Some(u) = (0..n).map(|k| (turn + k) % n).find(|&u| queue[u] > 0) else {
            let t = next_arrival.iter().cloned().fold(f64::INFINITY, f64::min);
            if !t.is_finite() {
                break;
            }
            now = t;
            continue;
        };
        turn = (u + 1) % n;
        let p = &stations[u].profile;
        let at = SimTime::from_secs_f64(now);
        let r = p.bitrate_at(at);
        let b = queue[u].min(p.max_batch as u64) as u32;
        let airtime = b as f64 * p.frame_bits / r + p.overhead.sample(&mut rng);
        let inter_ack = SimTime::from_secs_f64(airtime).max(SimTime::from_micros(1));
        now += inter_ack.as_secs_f64();
        queue[u] -= b as u64;
        if now >= end {
            break;
        }
        out.push(AmpduAckEvent {
            time: SimTime::from_secs_f64(now),
            user: u as u32,
            batch: b,
            frame_bits: p.frame_bits,
            bitrate_bps: r,
            max_batch: p.max_batch,
            inter_ack,
        });
    }
    out
}

pub fn generate_mac_trace(
    profile: &WifiProfile,
    offered_load_bps: f64,
    duration: SimTime,
    seed: u64,
) -> Vec<AmpduAckEvent> {
    generate_multi_user_trace(
        &[Station {
            profile: profile.clone(),
            offered_load_bps,
        }],
        duration,
        seed,
    )
}

/// Slope of `T_IA` (seconds) against batch size: least squares over the
/// per-batch mean `T_IA`, each mean weighted by its event count, which is the
/// same line as ordinary least squares over the raw events.
pub fn inter_ack_slope(events: &[AmpduAckEvent]) -> Option<f64> {
    let n = events.len() as f64;
    if n < 2.0 {
        return None;
    }
    let mx = events.iter().map(|e| e.batch as f64).sum::<f64>() / n;
    let my = events.iter().map(|e| e.inter_ack.as_secs_f64()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for e in events {
        let dx = e.batch as f64 - mx;
        sxy += dx * (e.inter_ack.as_secs_f64() - my);
        sxx += dx * dx;
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Field { line: u64, msg: String },
}

const HEADER: [&str; 7] = ["time_us", "b", "S_bits", "R_bps", "M", "T_IA_us", "user"];

/// Writes `time_us,b,S_bits,R_bps,M,T_IA_us,user`.
pub fn write_mac_trace<W: Write>(events: &[AmpduAckEvent], w: W) -> Result<(), TraceError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(HEADER)?;
    for e in events {
        wr.write_record([
            e.time.as_micros().to_string(),
            e.batch.to_string(),
            e.frame_bits.to_string(),
            e.bitrate_bps.to_string(),
            e.max_batch.to_string(),
            e.inter_ack.as_micros().to_string(),
            e.user.to_string(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads the format written by [`write_mac_trace`]; the `user` column is
/// optional and defaults to 0.
pub fn read_mac_trace<R: Read>(r: R) -> Result<Vec<AmpduAckEvent>, TraceError> {
    let mut rd = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| TraceError::Field { line, msg };
        if rec.len() < 6 {
            return Err(err(format!("expected at least 6 columns, got {}", rec.len())));
        }
        let num = |i: usize| -> Result<f64, TraceError> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| err(format!("column {} is not a number: {:?}", HEADER[i], &rec[i])))
        };
        let int = |i: usize| -> Result<u64, TraceError> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| err(format!("column {} is not an integer: {:?}", HEADER[i], &rec[i])))
        };
        let e = AmpduAckEvent {
            time: SimTime::from_micros(int(0)?),
            batch: int(1)? as u32,
            frame_bits: num(2)?,
            bitrate_bps: num(3)?,
            max_batch: int(4)? as u32,
            inter_ack: SimTime::from_micros(int(5)?),
            user: if rec.len() > 6 { int(6)? as u32 } else { 0 },
        };
        if e.batch == 0 || e.batch > e.max_batch {
            return Err(err(format!("batch {} outside 1..={}", e.batch, e.max_batch)));
        }
        if e.inter_ack == SimTime::ZERO || e.bitrate_bps <= 0.0 || e.frame_bits <= 0.0 {
            return Err(err("T_IA, S and R must be positive".into()));
        }
        out.push(e);
    }
    Ok(out)
}
