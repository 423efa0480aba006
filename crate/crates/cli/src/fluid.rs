//! `abcsim fluid`: integrates the delay-differential queue model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use abc_sim::abc_router::AbcParams;
use abc_sim::fluid::{self, FluidParams, Verdict};
use abc_sim::types::SimTime;
use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidFile {
    pub fluid: FluidConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub n: u32,
    pub mu_mbps: f64,
    pub tau_ms: f64,
    pub eta: Option<f64>,
    pub delta_ms: Option<f64>,
    pub d_t_ms: Option<f64>,
    /// Additive-increase period. Absent means one packet per RTT, solved
    /// self-consistently with the fixed point.
    pub l_ms: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    pub step_ms: Option<f64>,
    /// Constant history on `[-tau, 0]`.
    #[serde(default)]
    pub initial_delay_ms: f64,
}

fn default_horizon() -> f64 {
    10.0
}

fn ms(key: &str, v: f64) -> anyhow::Result<SimTime> {
    if !v.is_finite() || v <= 0.0 {
        bail!("`fluid.{key}`: must be positive, got {v}");
    }
    Ok(SimTime::from_secs_f64(v / 1e3))
}

impl FluidConfig {
    pub fn params(&self) -> anyhow::Result<FluidParams> {
        if self.n == 0 {
            bail!("`fluid.n`: must be at least 1");
        }
        if !(self.mu_mbps.is_finite() && self.mu_mbps > 0.0) {
            bail!("`fluid.mu_mbps`: must be positive, got {}", self.mu_mbps);
        }
        let tau = ms("tau_ms", self.tau_ms)?;
        let mut abc = AbcParams::default();
        if let Some(v) = self.eta {
            abc.eta = v;
        }
        if let Some(v) = self.delta_ms {
            abc.delta = ms("delta_ms", v)?;
        }
        if let Some(v) = self.d_t_ms {
            if !(v.is_finite() && v >= 0.0) {
                bail!("`fluid.d_t_ms`: must be non-negative, got {v}");
            }
            abc.delay_threshold = SimTime::from_secs_f64(v / 1e3);
        }
        abc.validate().map_err(|e| anyhow::anyhow!("`fluid`: {e}"))?;
        let mu = self.mu_mbps * 1e6;
        Ok(match self.l_ms {
            Some(l) => FluidParams::from_abc(&abc, self.n, mu, tau, ms("l_ms", l)?),
            None => FluidParams::with_rtt_ai_period(&abc, self.n, mu, tau),
        })
    }
}

/// Writes `trajectory.csv` (`time_s,x_ms,rate_mbps`) and `summary.txt`.
pub fn run(config_path: &Path, out: &Path, horizon_s: Option<f64>) -> anyhow::Result<Verdict> {
    let text = fs::read_to_string(config_path).with_context(|| format!("reading {}", config_path.display()))?;
    let file: FluidFile = toml::from_str(&text).with_context(|| format!("{}", config_path.display()))?;
    let cfg = file.fluid;
    let p = cfg.params()?;
    let horizon = horizon_s.unwrap_or(cfg.horizon_s);
    if !(horizon.is_finite() && horizon > 0.0) {
        bail!("`fluid.horizon_s`: must be positive, got {horizon}");
    }
    let step = match cfg.step_ms {
        Some(s) => ms("step_ms", s)?,
        None => fluid::default_step(&p),
    };
    if step > p.tau {
        bail!("`fluid.step_ms`: must not exceed tau_ms");
    }
    let x0 = cfg.initial_delay_ms.max(0.0) / 1e3;
    let t = fluid::integrate(&p, |_| x0, SimTime::from_secs_f64(horizon), step);
    let verdict = fluid::settles(&p, &t);

    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut w = csv::Writer::from_path(out.join("trajectory.csv"))?;
    w.write_record(["time_s", "x_ms", "rate_mbps"])?;
    for (i, (x, r)) in t.x.iter().zip(&t.rate).enumerate() {
        w.write_record([
            format!("{:.6}", t.time(i)),
            format!("{:.4}", x * 1e3),
            format!("{:.4}", r / 1e6),
        ])?;
    }
    w.flush()?;

    let mut s = String::new();
    let _ = writeln!(s, "a={:.6}", p.a());
    let _ = writeln!(s, "l_ms={:.3}", p.l.as_millis_f64());
    let _ = writeln!(s, "fixed_point_delay_ms={:.4}", p.fixed_point_delay_secs() * 1e3);
    let _ = writeln!(s, "fixed_point_rate_mbps={:.4}", fluid::fixed_point_rate(&p) / 1e6);
    let _ = writeln!(s, "stability_criterion={}", p.satisfies_stability_criterion());
    let _ = writeln!(s, "final_delay_ms={:.4}", t.last() * 1e3);
    let window = (10.0 * p.tau.as_secs_f64()).min(horizon);
    let _ = writeln!(
        s,
        "delivered_rate_mbps={:.4}",
        fluid::delivered_rate(&p, &t, window) / 1e6
    );
    match verdict {
        Verdict::Converged { settling_time } => {
            let _ = writeln!(s, "verdict=converged");
            let _ = writeln!(s, "settling_time_s={settling_time:.4}");
        }
        Verdict::Oscillating => {
            let _ = writeln!(s, "verdict=oscillating");
        }
    }
    fs::write(out.join("summary.txt"), s)?;
    Ok(verdict)
}
