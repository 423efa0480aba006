//! Time-varying link capacity.
//!
//! Every link is modelled as a sequence of *delivery opportunities*: instants
//! at which exactly one MTU-sized packet may leave the router. A fixed-rate
//! link places them on a regular grid, a step link restarts the grid at every
//! rate change, and a trace link replays a looped list of timestamps in the
//! same shape as Mahimahi packet-delivery traces.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::types::{SimTime, MTU};

#[derive(Debug, Error)]
pub enum LinkError {
    #[error("trace has no delivery opportunities")]
    EmptyTrace,
    #[error("trace line {line}: cannot parse {text:?} as a millisecond offset")]
    Parse { line: usize, text: String },
    #[error("trace line {line}: timestamps must be positive and strictly increasing")]
    NotIncreasing { line: usize },
    #[error("step schedule is empty")]
    EmptySchedule,
    #[error("step schedule must start at time 0")]
    ScheduleStart,
    #[error("step schedule start times must be strictly increasing")]
    ScheduleOrder,
    #[error("link rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("reading trace: {0}")]
    Io(#[from] std::io::Error),
}

const MTU_BITS: f64 = MTU as f64 * 8.0;

/// Microseconds needed to serialize one MTU at `rate_bps`.
fn mtu_interval_us(rate_bps: f64) -> f64 {
    MTU_BITS * 1e6 / rate_bps
}

/// Number of grid points `round(k * interval)`, k >= 1, that are <= `offset`.
fn grid_count_upto(offset: u64, interval: f64) -> u64 {
    let at = |k: u64| (k as f64 * interval).round() as u64;
    let mut k = ((offset as f64 + 0.5) / interval).floor() as u64;
    while at(k + 1) <= offset {
        k += 1;
    }
    while k > 0 && at(k) > offset {
        k -= 1;
    }
    k
}

/// One constant-rate piece of a step schedule. Build through
/// [`LinkProcess::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct StepSegment {
    pub start: SimTime,
    pub rate_bps: f64,
    /// Opportunities in all earlier segments.
    before: u64,
    /// Opportunities inside this segment; `None` for the open-ended last one.
    count: Option<u64>,
}

impl StepSegment {
    fn interval(&self) -> Option<f64> {
        (self.rate_bps > 0.0).then(|| mtu_interval_us(self.rate_bps))
    }

    fn count_upto(&self, t: SimTime) -> u64 {
        if t < self.start {
            return 0;
        }
        let n = match self.interval() {
            Some(iv) => grid_count_upto((t - self.start).as_micros(), iv),
            None => 0,
        };
        match self.count {
            Some(c) => n.min(c),
            None => n,
        }
    }
}

/// Capacity process of one link.
#[derive(Clone, Debug, PartialEq)]
pub enum LinkProcess {
    Fixed {
        rate_bps: f64,
    },
    Step {
        segments: Vec<StepSegment>,
    },
    Trace {
        /// Opportunity offsets within one period, strictly increasing, all > 0.
        opportunities: Vec<SimTime>,
        /// Loop period; equal to the last offset.
        period: SimTime,
    },
}

impl LinkProcess {
    pub fn fixed(rate_bps: f64) -> Result<Self, LinkError> {
        if !rate_bps.is_finite() || rate_bps < 0.0 {
            return Err(LinkError::InvalidRate(rate_bps));
        }
        Ok(LinkProcess::Fixed { rate_bps })
    }

    /// Piecewise-constant capacity. The first entry must start at time zero.
    pub fn step(schedule: Vec<(SimTime, f64)>) -> Result<Self, LinkError> {
        if schedule.is_empty() {
            return Err(LinkError::EmptySchedule);
        }
        if schedule[0].0 != SimTime::ZERO {
            return Err(LinkError::ScheduleStart);
        }
        if schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(LinkError::ScheduleOrder);
        }
        let mut index = Vec::with_capacity(schedule.len());
        let mut before = 0u64;
        for (i, &(start, rate)) in schedule.iter().enumerate() {
            if !rate.is_finite() || rate < 0.0 {
                return Err(LinkError::InvalidRate(rate));
            }
            let mut seg = StepSegment {
                start,
                rate_bps: rate,
                before,
                count: None,
            };
            if let Some(&(next, _)) = schedule.get(i + 1) {
                // Opportunities strictly before the next segment starts.
                let c = seg.count_upto(SimTime::from_micros(next.as_micros() - 1));
                seg.count = Some(c);
                before += c;
            }
            index.push(seg);
        }
        Ok(LinkProcess::Step { segments: index })
    }

    /// A looped trace of delivery opportunities.
    pub fn trace(opportunities: Vec<SimTime>) -> Result<Self, LinkError> {
        if opportunities.is_empty() {
            return Err(LinkError::EmptyTrace);
        }
        let mut prev = SimTime::ZERO;
        for (i, &t) in opportunities.iter().enumerate() {
            if t <= prev {
                return Err(LinkError::NotIncreasing { line: i + 1 });
            }
            prev = t;
        }
        let period = *opportunities.last().unwrap();
        Ok(LinkProcess::Trace { opportunities, period })
    }

    /// Parses the trace text format: one integer millisecond offset per line.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn trace_from_reader<R: BufRead>(reader: R) -> Result<Self, LinkError> {
        let mut times = Vec::new();
        let mut prev = SimTime::ZERO;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let ms: u64 = text.parse().map_err(|_| LinkError::Parse {
                line: i + 1,
                text: text.to_string(),
            })?;
            let t = SimTime::from_millis(ms);
            if t <= prev {
                return Err(LinkError::NotIncreasing { line: i + 1 });
            }
            prev = t;
            times.push(t);
        }
        Self::trace(times)
    }

    pub fn trace_from_file(path: impl AsRef<Path>) -> Result<Self, LinkError> {
        let file = std::fs::File::open(path)?;
        Self::trace_from_reader(std::io::BufReader::new(file))
    }

    /// Nominal rate at time `t`. Trace links report their long-run average.
    pub fn rate_at(&self, t: SimTime) -> f64 {
        match self {
            LinkProcess::Fixed { rate_bps } => *rate_bps,
            LinkProcess::Step { segments } => segments[segment_at(segments, t)].rate_bps,
            LinkProcess::Trace { opportunities, period } => {
                opportunities.len() as f64 * MTU_BITS / period.as_secs_f64()
            }
        }
    }

    /// Number of opportunities in `(0, t]`.
    pub fn count_upto(&self, t: SimTime) -> u64 {
        match self {
            LinkProcess::Fixed { rate_bps } => {
                if *rate_bps <= 0.0 {
                    0
                } else {
                    grid_count_upto(t.as_micros(), mtu_interval_us(*rate_bps))
                }
            }
            LinkProcess::Step { segments } => {
                let seg = &segments[segment_at(segments, t)];
                seg.before + seg.count_upto(t)
            }
            LinkProcess::Trace { opportunities, period } => {
                let p = period.as_micros();
                let full = t.as_micros() / p;
                let rem = SimTime::from_micros(t.as_micros() % p);
                let partial = opportunities.partition_point(|&o| o <= rem) as u64;
                full * opportunities.len() as u64 + partial
            }
        }
    }

    /// Time of the `idx`-th opportunity (0-based), or `None` if there is none.
    pub fn nth_opportunity(&self, idx: u64) -> Option<SimTime> {
        match self {
            LinkProcess::Fixed { rate_bps } => {
                if *rate_bps <= 0.0 {
                    return None;
                }
                let iv = mtu_interval_us(*rate_bps);
                Some(SimTime::from_micros(((idx + 1) as f64 * iv).round() as u64))
            }
            LinkProcess::Step { segments } => {
                // The last segment starting at or before `idx` holds it, unless
                // that is the open-ended tail with zero rate.
                let j = segments.partition_point(|s| s.before <= idx).saturating_sub(1);
                let seg = &segments[j];
                let local = idx - seg.before;
                if seg.count.is_some_and(|c| local >= c) {
                    return None;
                }
                let off = ((local + 1) as f64 * seg.interval()?).round() as u64;
                Some(seg.start + SimTime::from_micros(off))
            }
            LinkProcess::Trace { opportunities, period } => {
                let n = opportunities.len() as u64;
                let m = idx / n;
                let i = (idx % n) as usize;
                Some(opportunities[i] + SimTime::from_micros(m * period.as_micros()))
            }
        }
    }

    /// Earliest time `>= now` at which one MTU packet may be dequeued.
    /// Returns `SimTime::MAX` if the link never delivers again.
    pub fn next_delivery(&self, now: SimTime) -> SimTime {
        let idx = if now == SimTime::ZERO {
            0
        } else {
            self.count_upto(SimTime::from_micros(now.as_micros() - 1))
        };
        self.nth_opportunity(idx).unwrap_or(SimTime::MAX)
    }

    /// Opportunities in the half-open window `(from, to]`.
    pub fn opportunities_in(&self, from: SimTime, to: SimTime) -> u64 {
        if to <= from {
            return 0;
        }
        self.count_upto(to) - self.count_upto(from)
    }
}

fn segment_at(segs: &[StepSegment], t: SimTime) -> usize {
    segs.partition_point(|s| s.start <= t).saturating_sub(1)
}

/// A router's view of link capacity: the delivery opportunities of the
/// underlying link averaged over a trailing window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleRateView {
    pub window: SimTime,
}

impl OracleRateView {
    /// Window used for cellular-style links.
    pub const CELLULAR_WINDOW: SimTime = SimTime::from_millis(20);
    /// Window used for Wi-Fi-style links.
    pub const WIFI_WINDOW: SimTime = SimTime::from_millis(40);

    pub fn new(window: SimTime) -> Self {
        OracleRateView { window }
    }

    /// Opportunities in `(now - T, now]` times MTU bits over `T`, in bits/s.
    /// Before one full window has elapsed the average runs over `(0, now]`.
    pub fn capacity_bps(&self, link: &LinkProcess, now: SimTime) -> f64 {
        let span = if now < self.window { now } else { self.window };
        if span == SimTime::ZERO {
            return link.rate_at(now);
        }
        let n = link.opportunities_in(now - span, now);
        n as f64 * MTU_BITS / span.as_secs_f64()
    }
}
