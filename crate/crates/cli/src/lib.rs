//! Library side of `abcsim`: scenario parsing, run orchestration and output.

pub mod config;
pub mod fluid;
pub mod output;
pub mod wifi;

use std::path::{Path, PathBuf};

use abc_sim::engine;
use abc_sim::metrics::{self, MetricsLog};
use abc_sim::types::SimTime;
use anyhow::Context;
use rayon::prelude::*;

use config::{ScenarioConfig, SweepPoint};

/// Overrides from the command line; they apply to every sweep point.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub duration_s: Option<f64>,
}

/// One finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub point: SweepPoint,
    pub dir: PathBuf,
    pub log: MetricsLog,
}

fn apply(cfg: &mut ScenarioConfig, o: &RunOverrides) {
    if let Some(d) = o.duration_s {
        cfg.run.duration_s = d;
    }
    if let Some(s) = o.seed {
        cfg.run.seed = s;
        if let Some(sw) = cfg.sweep.as_mut() {
            sw.seeds = Some(vec![s]);
        }
    }
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses the file and builds every sweep point, without running anything.
pub fn validate(config_path: &Path, o: &RunOverrides) -> anyhow::Result<(ScenarioConfig, Vec<SweepPoint>)> {
    let mut cfg = config::load(config_path)?;
    apply(&mut cfg, o);
    let points = cfg.sweep_points();
    let base = base_dir(config_path);
    for p in &points {
        cfg.build(&base, *p)
            .with_context(|| format!("{}", config_path.display()))?;
    }
    Ok((cfg, points))
}

/// Runs a scenario, or every point of its sweep in parallel. A single run
/// writes straight into `out`; sweep points go to `out/<label>/` with one
/// line each in `out/sweep.csv`.
pub fn run_scenario(config_path: &Path, out: &Path, o: &RunOverrides) -> anyhow::Result<Vec<RunResult>> {
    let (cfg, points) = validate(config_path, o)?;
    let base = base_dir(config_path);
    let scenario = config_path
        .file_stem()
        .map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
    let sweep = cfg.is_sweep();

    let results: Vec<RunResult> = points
        .par_iter()
        .map(|&point| -> anyhow::Result<RunResult> {
            let built = cfg.build(&base, point)?;
            let log = engine::run(&built.topology, built.duration, built.seed)
                .with_context(|| format!("running {}", point.label()))?;
            let dir = if sweep {
                out.join(point.label())
            } else {
                out.to_path_buf()
            };
            let mut header = vec![("scenario", scenario.clone()), ("seed", point.seed.to_string())];
            if let Some(l) = point.short_load_mbps {
                header.push(("short_load_mbps", l.to_string()));
            }
            output::write_run(&dir, &header, &log)?;
            Ok(RunResult { point, dir, log })
        })
        .collect::<anyhow::Result<_>>()?;

    if sweep {
        write_sweep_table(&out.join("sweep.csv"), &results)?;
    }
    Ok(results)
}

/// Per-point headline numbers, measured over the last two thirds of the run.
fn write_sweep_table(path: &Path, results: &[RunResult]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "label",
        "seed",
        "short_load_mbps",
        "hop",
        "utilization",
        "delay_p95_ms",
        "abc_mbps",
        "cubic_mbps",
        "jain_index",
    ])?;
    for r in results {
        let log = &r.log;
        let from = SimTime::from_micros(log.duration.as_micros() / 3);
        let to = log.duration;
        let kind_rate = |kind: metrics::FlowKind| {
            let ids: Vec<_> = log.flows.iter().filter(|f| f.kind == kind).map(|f| f.id).collect();
            metrics::aggregate_throughput(log, from, to, |id| ids.contains(&id)) / 1e6
        };
        let abc = kind_rate(metrics::FlowKind::Abc);
        let cubic = kind_rate(metrics::FlowKind::Cubic);
        let long: Vec<f64> = log
            .flows
            .iter()
            .filter(|f| !f.short)
            .map(|f| metrics::throughput(log, f.id, from, to))
            .collect();
        let jain = metrics::jain_index(&long).map_or(String::new(), |j| format!("{j:.4}"));
        for (i, h) in log.hops.iter().enumerate() {
            let util = metrics::utilization_between(log, i, from, to)?;
            let mut delays = metrics::hop_delays(log, i, from, to)?;
            let p95 =
                metrics::percentile(&mut delays, 0.95).map_or(String::new(), |d| format!("{:.3}", d.as_millis_f64()));
            w.write_record([
                r.point.label(),
                r.point.seed.to_string(),
                r.point.short_load_mbps.map_or(String::new(), |l| l.to_string()),
                h.name.clone(),
                format!("{util:.4}"),
                p95,
                format!("{abc:.4}"),
                format!("{cubic:.4}"),
                jain.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
