//! `abcsim wifi-estimate`: runs the capacity estimator over a MAC trace,
//! either read from a file or generated from station profiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use abc_sim::types::SimTime;
use abc_sim::wifi_estimator::{
    self, AmpduAckEvent, EstimatorMode, OverheadModel, Station, WifiProfile, DEFAULT_FILTER_WINDOW,
};
use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiFile {
    pub wifi: WifiRun,
    #[serde(rename = "station")]
    pub stations: Vec<StationConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WifiRun {
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub bitrate_mbps: f64,
    pub max_batch: u32,
    #[serde(default = "default_frame_bytes")]
    pub frame_bytes: f64,
    pub load_mbps: f64,
    /// Per-batch overhead; `overhead_std_us = 0` makes it constant.
    pub overhead_mean_us: u64,
    #[serde(default)]
    pub overhead_std_us: u64,
    pub overhead_min_us: Option<u64>,
}

fn default_frame_bytes() -> f64 {
    1500.0
}

impl StationConfig {
    fn station(&self, i: usize) -> anyhow::Result<Station> {
        let key = |f: &str| format!("`station[{i}].{f}`");
        if !(self.bitrate_mbps.is_finite() && self.bitrate_mbps > 0.0) {
            bail!("{}: must be positive, got {}", key("bitrate_mbps"), self.bitrate_mbps);
        }
        if self.max_batch == 0 {
            bail!("{}: must be at least 1", key("max_batch"));
        }
        if !(self.frame_bytes.is_finite() && self.frame_bytes > 0.0) {
            bail!("{}: must be positive, got {}", key("frame_bytes"), self.frame_bytes);
        }
        if !(self.load_mbps.is_finite() && self.load_mbps > 0.0) {
            bail!("{}: must be positive, got {}", key("load_mbps"), self.load_mbps);
        }
        let min = self.overhead_min_us.unwrap_or(self.overhead_mean_us);
        if min > self.overhead_mean_us {
            bail!("{}: exceeds overhead_mean_us", key("overhead_min_us"));
        }
        if self.overhead_mean_us == 0 {
            bail!("{}: must be positive", key("overhead_mean_us"));
        }
        let overhead = OverheadModel {
            mean: SimTime::from_micros(self.overhead_mean_us),
            std: SimTime::from_micros(self.overhead_std_us),
            min: SimTime::from_micros(min),
        };
        Ok(Station {
            profile: WifiProfile::fixed(
                self.bitrate_mbps * 1e6,
                self.max_batch,
                self.frame_bytes * 8.0,
                overhead,
            ),
            offered_load_bps: self.load_mbps * 1e6,
        })
    }
}

pub enum Source<'a> {
    Trace(&'a Path),
    Config(&'a Path),
}

#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub mode: EstimatorMode,
    pub window: SimTime,
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            mode: EstimatorMode::Shared,
            window: DEFAULT_FILTER_WINDOW,
            seed: None,
            duration_s: None,
        }
    }
}

/// Generates the trace a config describes; returns it with each station's
/// backlogged capacity at mean overhead.
pub fn generate(config_path: &Path, opts: &Options) -> anyhow::Result<(Vec<AmpduAckEvent>, Vec<f64>)> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let file: WifiFile = toml::from_str(&text).with_context(|| format!("{}", config_path.display()))?;
    if file.stations.is_empty() {
        bail!("`station`: at least one [[station]] is required");
    }
    let duration = opts.duration_s.unwrap_or(file.wifi.duration_s);
    if !(duration.is_finite() && duration > 0.0) {
        bail!("`wifi.duration_s`: must be positive, got {duration}");
    }
    let stations = file
        .stations
        .iter()
        .enumerate()
        .map(|(i, s)| s.station(i))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let caps = stations.iter().map(|s| s.profile.capacity_at(SimTime::ZERO)).collect();
    let seed = opts.seed.unwrap_or(file.wifi.seed);
    Ok((
        wifi_estimator::generate_multi_user_trace(&stations, SimTime::from_secs_f64(duration), seed),
        caps,
    ))
}

/// Writes `estimates.csv` and `summary.txt`; generated traces are also saved
/// as `events.csv`.
pub fn run(
    source: Source<'_>,
    out: &Path,
    opts: &Options,
) -> anyhow::Result<BTreeMap<u32, Vec<wifi_estimator::Estimate>>> {
    if opts.window == SimTime::ZERO {
        bail!("--window-ms must be positive");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let (events, caps) = match source {
        Source::Trace(p) => {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            let ev = wifi_estimator::read_mac_trace(f).with_context(|| format!("{}", p.display()))?;
            (ev, Vec::new())
        }
        Source::Config(p) => {
            let (ev, caps) = generate(p, opts)?;
            wifi_estimator::write_mac_trace(&ev, fs::File::create(out.join("events.csv"))?)?;
            (ev, caps)
        }
    };
    if events.is_empty() {
        bail!("trace has no Block-ACK events");
    }
    let est = wifi_estimator::estimate_stream(&events, opts.mode, opts.window);

    let mut w = csv::Writer::from_path(out.join("estimates.csv"))?;
    w.write_record([
        "user",
        "time_s",
        "mu_hat_mbps",
        "uncapped_mbps",
        "current_rate_mbps",
        "capped",
    ])?;
    for (user, list) in &est {
        for e in list {
            w.write_record([
                user.to_string(),
                format!("{:.6}", e.time.as_secs_f64()),
                format!("{:.4}", e.mu_hat / 1e6),
                format!("{:.4}", e.uncapped / 1e6),
                format!("{:.4}", e.current_rate / 1e6),
                e.capped.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut s = String::new();
    let _ = writeln!(s, "events={}", events.len());
    let _ = writeln!(
        s,
        "mode={}",
        match opts.mode {
            EstimatorMode::Shared => "shared",
            EstimatorMode::PerUser => "per_user",
        }
    );
    for (user, list) in &est {
        // Skip the first window while the filter fills.
        let from = events[0].time + opts.window;
        let tail: Vec<f64> = list.iter().filter(|e| e.time >= from).map(|e| e.uncapped).collect();
        if !tail.is_empty() {
            let mean = tail.iter().sum::<f64>() / tail.len() as f64;
            let _ = writeln!(s, "user.{user}.mean_uncapped_mbps={:.4}", mean / 1e6);
        }
        let slope_events: Vec<AmpduAckEvent> = events.iter().filter(|e| e.user == *user).copied().collect();
        if let Some(slope) = wifi_estimator::inter_ack_slope(&slope_events) {
            let _ = writeln!(s, "user.{user}.inter_ack_slope_us={:.4}", slope * 1e6);
        }
    }
    for (i, c) in caps.iter().enumerate() {
        let _ = writeln!(s, "station.{i}.capacity_mbps={:.4}", c / 1e6);
    }
    fs::write(out.join("summary.txt"), s)?;
    Ok(est)
}
