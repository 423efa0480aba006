//! TOML scenario files and their translation into an engine topology.

use std::fmt;
use std::path::{Path, PathBuf};

use abc_sim::abc_router::{AbcParams, AbcRouterConfig, WeightingConfig};
use abc_sim::abc_sender::AbcSenderConfig;
use abc_sim::engine::{ConfigError, FlowSpec, HopSpec, QueueSpec, SenderSpec, ShortFlowSpec, Topology};
use abc_sim::legacy::{LegacyEcn, ShortFlowGenerator, SHORT_FLOW_BYTES};
use abc_sim::links::{LinkProcess, OracleRateView};
use abc_sim::types::SimTime;
use serde::Deserialize;

/// A config problem, tagged with the key that caused it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub key: String,
    pub msg: String,
}

impl ConfigIssue {
    fn new(key: impl Into<String>, msg: impl Into<String>) -> Self {
        ConfigIssue {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.key, self.msg)
    }
}

impl std::error::Error for ConfigIssue {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunConfig,
    #[serde(rename = "hop")]
    pub hops: Vec<HopConfig>,
    #[serde(rename = "flow", default)]
    pub flows: Vec<FlowConfig>,
    #[serde(default)]
    pub short_flows: Vec<ShortFlowConfig>,
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub sample_interval_ms: Option<f64>,
    #[serde(default)]
    pub send_jitter_ms: f64,
    #[serde(default)]
    pub trace_routers: bool,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discipline {
    Abc,
    Droptail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityView {
    #[default]
    Oracle,
    Wifi,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopConfig {
    pub name: String,
    pub discipline: Discipline,
    pub link: LinkConfig,
    #[serde(default)]
    pub delay_ms: f64,
    #[serde(default = "default_buffer")]
    pub buffer: usize,
    pub ecn_threshold: Option<usize>,
    #[serde(default)]
    pub view: CapacityView,
    pub abc: Option<AbcParamsConfig>,
    pub weighting: Option<WeightingToml>,
}

fn default_buffer() -> usize {
    250
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinkConfig {
    Fixed {
        rate_mbps: f64,
    },
    /// `[start_s, rate_mbps]` pairs.
    Step {
        segments: Vec<(f64, f64)>,
    },
    /// Mahimahi-style trace, relative to the config file.
    Trace {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcParamsConfig {
    pub eta: Option<f64>,
    pub delta_ms: Option<f64>,
    pub delay_threshold_ms: Option<f64>,
    pub window_ms: Option<f64>,
    pub token_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightingToml {
    pub period_ms: Option<f64>,
    pub headroom: Option<f64>,
    pub top_k: Option<usize>,
    pub sketch_counters: Option<usize>,
    pub initial_weight: Option<f64>,
    pub min_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Abc,
    Cubic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub scheme: Scheme,
    pub rtt_ms: f64,
    #[serde(default)]
    pub start_s: f64,
    pub stop_s: Option<f64>,
    /// Identical copies of this flow.
    #[serde(default = "default_count")]
    pub count: u32,
    /// Copy `i` starts `i * stagger_s` after `start_s`.
    #[serde(default)]
    pub stagger_s: f64,
    pub size_bytes: Option<u64>,
    pub initial_window: Option<f64>,
    /// Cubic only.
    #[serde(default)]
    pub ecn: bool,
    /// ABC only.
    pub additive_increase: Option<bool>,
    pub cap_windows: Option<bool>,
    pub cubic_shadow: Option<bool>,
    pub coalesce: Option<u32>,
    pub ack_delay_ms: Option<f64>,
}

fn default_count() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShortFlowConfig {
    pub scheme: Scheme,
    pub load_mbps: f64,
    pub rtt_ms: f64,
    #[serde(default = "default_short_bytes")]
    pub size_bytes: u64,
}

fn default_short_bytes() -> u64 {
    SHORT_FLOW_BYTES
}

/// Runs the cartesian product of the listed values; absent lists keep the
/// scenario's own value.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: Option<Vec<u64>>,
    /// Replaces `load_mbps` of every `[[short_flows]]` entry.
    pub short_load_mbps: Option<Vec<f64>>,
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub seed: u64,
    pub short_load_mbps: Option<f64>,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        match self.short_load_mbps {
            Some(l) => format!("seed{}_load{}", self.seed, l),
            None => format!("seed{}", self.seed),
        }
    }
}

/// A scenario ready to hand to the engine.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub topology: Topology,
    pub duration: SimTime,
    pub seed: u64,
}

pub fn load(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
    parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn parse(text: &str) -> Result<ScenarioConfig, toml::de::Error> {
    toml::from_str(text)
}

fn secs(key: &str, v: f64) -> Result<SimTime, ConfigIssue> {
    if !v.is_finite() || v < 0.0 {
        return Err(ConfigIssue::new(
            key,
            format!("must be a finite non-negative number, got {v}"),
        ));
    }
    Ok(SimTime::from_secs_f64(v))
}

fn millis(key: &str, v: f64) -> Result<SimTime, ConfigIssue> {
    secs(key, v).map(|_| SimTime::from_secs_f64(v / 1e3))
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigIssue> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigIssue::new(key, format!("must be positive, got {v}")))
    }
}

impl ScenarioConfig {
    /// Points to run: the sweep's product, or the scenario itself.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let sweep = self.sweep.clone().unwrap_or_default();
        let seeds = sweep.seeds.unwrap_or_else(|| vec![self.run.seed]);
        let loads: Vec<Option<f64>> = match sweep.short_load_mbps {
            Some(l) => l.into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &load in &loads {
            for &seed in &seeds {
                out.push(SweepPoint {
                    seed,
                    short_load_mbps: load,
                });
            }
        }
        out
    }

    pub fn is_sweep(&self) -> bool {
        self.sweep.is_some()
    }

    /// Builds the topology for one sweep point. Relative trace paths resolve
    /// against `base_dir`.
    pub fn build(&self, base_dir: &Path, point: SweepPoint) -> Result<BuiltScenario, ConfigIssue> {
        let duration = secs("run.duration_s", self.run.duration_s)?;
        if duration == SimTime::ZERO {
            return Err(ConfigIssue::new("run.duration_s", "must be positive"));
        }
        if self.hops.is_empty() {
            return Err(ConfigIssue::new("hop", "at least one [[hop]] is required"));
        }
        let mut names = std::collections::HashSet::new();
        let mut hops = Vec::new();
        for (i, h) in self.hops.iter().enumerate() {
            let key = format!("hop[{i}]");
            if h.name.is_empty()
                || !h
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(ConfigIssue::new(
                    format!("{key}.name"),
                    "use letters, digits, '_' or '-'",
                ));
            }
            if !names.insert(h.name.clone()) {
                return Err(ConfigIssue::new(
                    format!("{key}.name"),
                    format!("duplicate hop name {:?}", h.name),
                ));
            }
            hops.push(build_hop(&key, h, base_dir)?);
        }

        let mut flows = Vec::new();
        for (i, f) in self.flows.iter().enumerate() {
            let key = format!("flow[{i}]");
            if f.count == 0 {
                return Err(ConfigIssue::new(format!("{key}.count"), "must be at least 1"));
            }
            let base = build_flow(&key, f)?;
            let stagger = secs(&format!("{key}.stagger_s"), f.stagger_s)?;
            for c in 0..f.count {
                let mut spec = base.clone();
                spec.start = base.start + SimTime::from_micros(stagger.as_micros() * c as u64);
                flows.push((key.clone(), spec));
            }
        }

        let mut short_flows = Vec::new();
        for (i, s) in self.short_flows.iter().enumerate() {
            let key = format!("short_flows[{i}]");
            let load = point.short_load_mbps.unwrap_or(s.load_mbps);
            if !load.is_finite() || load < 0.0 {
                return Err(ConfigIssue::new(
                    format!("{key}.load_mbps"),
                    format!("must be non-negative, got {load}"),
                ));
            }
            if s.size_bytes == 0 {
                return Err(ConfigIssue::new(format!("{key}.size_bytes"), "must be positive"));
            }
            let rtt = millis(&format!("{key}.rtt_ms"), s.rtt_ms)?;
            let template = match s.scheme {
                Scheme::Abc => FlowSpec::abc(rtt),
                Scheme::Cubic => FlowSpec::cubic(rtt),
            };
            if load > 0.0 {
                short_flows.push((
                    key,
                    ShortFlowSpec {
                        generator: ShortFlowGenerator::new(load * 1e6, s.size_bytes),
                        template,
                    },
                ));
            }
        }
        if flows.is_empty() && short_flows.is_empty() {
            return Err(ConfigIssue::new("flow", "scenario has no traffic"));
        }

        let hop_delay: SimTime = hops.iter().fold(SimTime::ZERO, |a, h: &HopSpec| a + h.delay);
        for (key, spec) in flows
            .iter()
            .map(|(k, s)| (k, s))
            .chain(short_flows.iter().map(|(k, s)| (k, &s.template)))
        {
            if spec.rtt < hop_delay + hop_delay {
                return Err(ConfigIssue::new(
                    format!("{key}.rtt_ms"),
                    format!(
                        "{} is shorter than twice the summed hop delays ({})",
                        spec.rtt, hop_delay
                    ),
                ));
            }
        }

        let flow_keys: Vec<String> = flows.iter().map(|(k, _)| k.clone()).collect();
        let mut topology = Topology::new(hops, flows.into_iter().map(|(_, s)| s).collect());
        topology.short_flows = short_flows.into_iter().map(|(_, s)| s).collect();
        topology.send_jitter = millis("run.send_jitter_ms", self.run.send_jitter_ms)?;
        topology.trace_routers = self.run.trace_routers;
        if let Some(ms) = self.run.sample_interval_ms {
            topology.sample_interval = millis("run.sample_interval_ms", positive("run.sample_interval_ms", ms)?)?;
        }
        topology.validate().map_err(|e| engine_issue(e, &flow_keys))?;
        Ok(BuiltScenario {
            topology,
            duration,
            seed: point.seed,
        })
    }
}

fn engine_issue(e: ConfigError, flow_keys: &[String]) -> ConfigIssue {
    let msg = e.to_string();
    let key = match e {
        ConfigError::NoHops => "hop".to_string(),
        ConfigError::MissingLink(h) => format!("hop[{h}].link"),
        ConfigError::Router { hop, .. } => format!("hop[{hop}]"),
        ConfigError::Buffer(h) => format!("hop[{h}].buffer"),
        ConfigError::RttTooShort { flow, .. } => flow_keys.get(flow).map_or("flow".into(), |k| format!("{k}.rtt_ms")),
        ConfigError::Coalesce(flow) => flow_keys.get(flow).map_or("flow".into(), |k| format!("{k}.coalesce")),
        ConfigError::SampleInterval => "run.sample_interval_ms".to_string(),
    };
    ConfigIssue { key, msg }
}

fn build_link(key: &str, link: &LinkConfig, base_dir: &Path) -> Result<LinkProcess, ConfigIssue> {
    match link {
        LinkConfig::Fixed { rate_mbps } => {
            let r = positive(&format!("{key}.rate_mbps"), *rate_mbps)?;
            LinkProcess::fixed(r * 1e6).map_err(|e| ConfigIssue::new(format!("{key}.rate_mbps"), e.to_string()))
        }
        LinkConfig::Step { segments } => {
            let key = format!("{key}.segments");
            let mut schedule = Vec::with_capacity(segments.len());
            for (j, &(start, rate)) in segments.iter().enumerate() {
                let start = secs(&format!("{key}[{j}][0]"), start)?;
                let rate = positive(&format!("{key}[{j}][1]"), rate)?;
                schedule.push((start, rate * 1e6));
            }
            LinkProcess::step(schedule).map_err(|e| ConfigIssue::new(key, e.to_string()))
        }
        LinkConfig::Trace { path } => {
            let full = base_dir.join(path);
            if !full.exists() {
                return Err(ConfigIssue::new(
                    format!("{key}.path"),
                    format!("{} does not exist", full.display()),
                ));
            }
            LinkProcess::trace_from_file(&full).map_err(|e| ConfigIssue::new(format!("{key}.path"), e.to_string()))
        }
    }
}

fn build_hop(key: &str, h: &HopConfig, base_dir: &Path) -> Result<HopSpec, ConfigIssue> {
    let link = build_link(&format!("{key}.link"), &h.link, base_dir)?;
    let delay = millis(&format!("{key}.delay_ms"), h.delay_ms)?;
    if h.buffer == 0 {
        return Err(ConfigIssue::new(
            format!("{key}.buffer"),
            "must hold at least one packet",
        ));
    }
    let queue = match h.discipline {
        Discipline::Droptail => {
            for (field, set) in [("abc", h.abc.is_some()), ("weighting", h.weighting.is_some())] {
                if set {
                    return Err(ConfigIssue::new(
                        format!("{key}.{field}"),
                        "only applies to discipline = \"abc\"",
                    ));
                }
            }
            QueueSpec::Droptail {
                buffer: h.buffer,
                ecn_threshold: h.ecn_threshold,
            }
        }
        Discipline::Abc => {
            if h.ecn_threshold.is_some() {
                return Err(ConfigIssue::new(
                    format!("{key}.ecn_threshold"),
                    "only applies to discipline = \"droptail\"",
                ));
            }
            if h.view == CapacityView::Wifi {
                return Err(ConfigIssue::new(
                    format!("{key}.view"),
                    "the packet engine only supports the oracle view; run `abcsim wifi-estimate` on MAC traces instead",
                ));
            }
            let params = abc_params(&format!("{key}.abc"), h.abc.as_ref())?;
            let weighting = h
                .weighting
                .as_ref()
                .map(|w| weighting(&format!("{key}.weighting"), w))
                .transpose()?;
            let cfg = AbcRouterConfig {
                params,
                view: OracleRateView::new(params.window),
                buffer: h.buffer,
                weighting,
            };
            cfg.validate().map_err(|e| ConfigIssue::new(key, e.to_string()))?;
            QueueSpec::Abc(cfg)
        }
    };
    Ok(HopSpec {
        name: h.name.clone(),
        link: Some(link),
        queue,
        delay,
    })
}

fn abc_params(key: &str, c: Option<&AbcParamsConfig>) -> Result<AbcParams, ConfigIssue> {
    let mut p = AbcParams::default();
    let Some(c) = c else {
        return Ok(p);
    };
    if let Some(v) = c.eta {
        p.eta = v;
    }
    if let Some(v) = c.delta_ms {
        p.delta = millis(&format!("{key}.delta_ms"), v)?;
    }
    if let Some(v) = c.delay_threshold_ms {
        p.delay_threshold = millis(&format!("{key}.delay_threshold_ms"), v)?;
    }
    if let Some(v) = c.window_ms {
        p.window = millis(&format!("{key}.window_ms"), v)?;
    }
    if let Some(v) = c.token_limit {
        p.token_limit = v;
    }
    p.validate().map_err(|e| ConfigIssue::new(key, e.to_string()))?;
    Ok(p)
}

fn weighting(key: &str, c: &WeightingToml) -> Result<WeightingConfig, ConfigIssue> {
    let mut w = WeightingConfig::default();
    if let Some(v) = c.period_ms {
        w.period = millis(&format!("{key}.period_ms"), v)?;
    }
    if let Some(v) = c.headroom {
        if !v.is_finite() || v < 0.0 {
            return Err(ConfigIssue::new(
                format!("{key}.headroom"),
                format!("must be non-negative, got {v}"),
            ));
        }
        w.headroom = v;
    }
    if let Some(v) = c.top_k {
        w.top_k = v;
    }
    if let Some(v) = c.sketch_counters {
        w.sketch_counters = v;
    } else {
        w.sketch_counters = w.sketch_counters.max(w.top_k);
    }
    if let Some(v) = c.initial_weight {
        w.initial_weight = v;
    }
    if let Some(v) = c.min_weight {
        w.min_weight = v;
    }
    Ok(w)
}

fn build_flow(key: &str, f: &FlowConfig) -> Result<FlowSpec, ConfigIssue> {
    let rtt = millis(&format!("{key}.rtt_ms"), f.rtt_ms)?;
    if rtt == SimTime::ZERO {
        return Err(ConfigIssue::new(format!("{key}.rtt_ms"), "must be positive"));
    }
    let abc_only = [
        ("additive_increase", f.additive_increase.is_some()),
        ("cap_windows", f.cap_windows.is_some()),
        ("cubic_shadow", f.cubic_shadow.is_some()),
    ];
    let initial = f
        .initial_window
        .map(|w| positive(&format!("{key}.initial_window"), w))
        .transpose()?;
    let sender = match f.scheme {
        Scheme::Abc => {
            if f.ecn {
                return Err(ConfigIssue::new(
                    format!("{key}.ecn"),
                    "only applies to scheme = \"cubic\"",
                ));
            }
            let d = AbcSenderConfig::default();
            SenderSpec::Abc(AbcSenderConfig {
                initial_window: initial.unwrap_or(d.initial_window),
                additive_increase: f.additive_increase.unwrap_or(d.additive_increase),
                cap_windows: f.cap_windows.unwrap_or(d.cap_windows),
                cubic_shadow: f.cubic_shadow.unwrap_or(d.cubic_shadow),
                ..d
            })
        }
        Scheme::Cubic => {
            if let Some((field, _)) = abc_only.iter().find(|(_, set)| *set) {
                return Err(ConfigIssue::new(
                    format!("{key}.{field}"),
                    "only applies to scheme = \"abc\"",
                ));
            }
            let SenderSpec::Cubic { initial_window, .. } = SenderSpec::cubic() else {
                unreachable!()
            };
            SenderSpec::Cubic {
                ecn: if f.ecn { LegacyEcn::On } else { LegacyEcn::Off },
                initial_window: initial.unwrap_or(initial_window),
            }
        }
    };
    let mut spec = FlowSpec::new(sender, rtt);
    spec.start = secs(&format!("{key}.start_s"), f.start_s)?;
    if let Some(stop) = f.stop_s {
        let stop = secs(&format!("{key}.stop_s"), stop)?;
        if stop <= spec.start {
            return Err(ConfigIssue::new(format!("{key}.stop_s"), "must be after start_s"));
        }
        spec.stop = Some(stop);
    }
    if let Some(size) = f.size_bytes {
        if size == 0 {
            return Err(ConfigIssue::new(format!("{key}.size_bytes"), "must be positive"));
        }
        spec.size = Some(size);
    }
    if let Some(c) = f.coalesce {
        spec.coalesce = c;
    }
    if let Some(ms) = f.ack_delay_ms {
        spec.ack_delay = millis(&format!("{key}.ack_delay_ms"), ms)?;
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [run]
        duration_s = 2

        [[hop]]
        name = "wireless"
        discipline = "abc"
        link = { kind = "fixed", rate_mbps = 12 }

        [[flow]]
        scheme = "abc"
        rtt_ms = 100
        count = 3
        stagger_s = 0.5
    "#;

    fn build(text: &str) -> Result<BuiltScenario, ConfigIssue> {
        let cfg = parse(text).expect("parses");
        let point = cfg.sweep_points()[0];
        cfg.build(Path::new("."), point)
    }

    #[test]
    fn minimal_scenario() {
        let b = build(MINIMAL).unwrap();
        assert_eq!(b.duration, SimTime::from_secs(2));
        assert_eq!(b.seed, 1);
        let starts: Vec<u64> = b.topology.flows.iter().map(|f| f.start.as_micros()).collect();
        assert_eq!(starts, vec![0, 500_000, 1_000_000]);
        let QueueSpec::Abc(cfg) = &b.topology.hops[0].queue else {
            panic!("abc hop")
        };
        assert_eq!(cfg.params, AbcParams::default());
        assert!(cfg.weighting.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse(&MINIMAL.replace("count = 3", "cuont = 3"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("cuont"), "{err}");
    }

    #[test]
    fn bad_values_name_their_key() {
        let cases = [
            (
                MINIMAL.replace("rate_mbps = 12", "rate_mbps = -1"),
                "hop[0].link.rate_mbps",
            ),
            (
                MINIMAL.replace("rtt_ms = 100", "rtt_ms = 100\nstop_s = 0"),
                "flow[0].stop_s",
            ),
            (MINIMAL.replace("duration_s = 2", "duration_s = 0"), "run.duration_s"),
            (
                MINIMAL.replace("discipline = \"abc\"", "discipline = \"abc\"\nview = \"wifi\""),
                "hop[0].view",
            ),
            (
                MINIMAL.replace("discipline = \"abc\"", "discipline = \"abc\"\ndelay_ms = 60"),
                "flow[0].rtt_ms",
            ),
            (
                MINIMAL.replace("discipline = \"abc\"", "discipline = \"droptail\"\nabc = { eta = 0.9 }"),
                "hop[0].abc",
            ),
            (
                MINIMAL.replace("scheme = \"abc\"", "scheme = \"cubic\"\ncap_windows = false"),
                "flow[0].cap_windows",
            ),
        ];
        for (text, key) in cases {
            let issue = build(&text).unwrap_err();
            assert_eq!(issue.key, key, "{issue}");
        }
    }

    #[test]
    fn abc_overrides_are_validated() {
        let text = MINIMAL.replace("rate_mbps = 12 }", "rate_mbps = 12 }\nabc = { eta = 1.5 }");
        assert_eq!(build(&text).unwrap_err().key, "hop[0].abc");
        let text = MINIMAL.replace(
            "rate_mbps = 12 }",
            "rate_mbps = 12 }\nabc = { delay_threshold_ms = 20 }",
        );
        let b = build(&text).unwrap();
        let QueueSpec::Abc(cfg) = &b.topology.hops[0].queue else {
            panic!("abc hop")
        };
        assert_eq!(cfg.params.delay_threshold, SimTime::from_millis(20));
    }

    #[test]
    fn sweep_points_are_a_product() {
        let text = format!(
            "{MINIMAL}\n[[short_flows]]\nscheme = \"cubic\"\nload_mbps = 1\nrtt_ms = 100\n[sweep]\nseeds = [1, 2]\nshort_load_mbps = [0, 2.4]\n"
        );
        let cfg = parse(&text).unwrap();
        let points = cfg.sweep_points();
        assert_eq!(points.len(), 4);
        assert_eq!(points[3].label(), "seed2_load2.4");
        // A zero load drops the generator.
        let b = cfg.build(Path::new("."), points[0]).unwrap();
        assert!(b.topology.short_flows.is_empty());
        let b = cfg.build(Path::new("."), points[3]).unwrap();
        assert_eq!(b.topology.short_flows[0].generator.load_bps, 2.4e6);
        assert_eq!(b.seed, 2);
    }

    #[test]
    fn missing_trace_file_is_reported() {
        let text = MINIMAL.replace(
            "link = { kind = \"fixed\", rate_mbps = 12 }",
            "link = { kind = \"trace\", path = \"no/such.trace\" }",
        );
        assert_eq!(build(&text).unwrap_err().key, "hop[0].link.path");
    }
}
