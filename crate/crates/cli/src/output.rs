//! Writes a run's log as a directory of CSV files plus `summary.txt`.

use std::fs;
use std::path::Path;

use abc_sim::abc_router::QueueKind;
use abc_sim::metrics::{self, MetricsLog};
use abc_sim::types::{EcnCodepoint, SimTime};
use anyhow::Context;

fn writer(path: &Path) -> anyhow::Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn secs(t: SimTime) -> String {
    format!("{:.6}", t.as_secs_f64())
}

fn mark_name(m: Option<EcnCodepoint>) -> &'static str {
    match m {
        None => "",
        Some(EcnCodepoint::Accel) => "accel",
        Some(EcnCodepoint::Brake) => "brake",
        Some(EcnCodepoint::NotEct) => "not_ect",
        Some(EcnCodepoint::EcnSet) => "ce",
    }
}

/// Layout:
///
/// ```text
/// summary.txt
/// flows/<id>.csv          time_s,w_abc,w_cubic,inflight,delivered_bytes,throughput_mbps
/// flows/short.csv         id,kind,start_s,size_bytes,completion_s,fct_ms
/// routers/<hop>.csv       dequeue_s,flow,seq,size,queue_delay_ms
/// routers/<hop>.marks.csv time_s,queue,f,tr_mbps,cr_mbps,x_ms,token,mark
/// routers/<hop>.weights.csv time_s,abc_weight
/// ```
pub fn write_run(dir: &Path, header: &[(&str, String)], log: &MetricsLog) -> anyhow::Result<()> {
    let flows_dir = dir.join("flows");
    let routers_dir = dir.join("routers");
    fs::create_dir_all(&flows_dir).with_context(|| format!("creating {}", flows_dir.display()))?;
    fs::create_dir_all(&routers_dir).with_context(|| format!("creating {}", routers_dir.display()))?;

    let mut summary: String = header.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    summary.push_str(&metrics::summary(log));
    fs::write(dir.join("summary.txt"), summary).context("writing summary.txt")?;

    let mut shorts = Vec::new();
    for f in &log.flows {
        if f.short {
            shorts.push(f);
            continue;
        }
        let mut w = writer(&flows_dir.join(format!("{}.csv", f.id.0)))?;
        w.write_record([
            "time_s",
            "w_abc",
            "w_cubic",
            "inflight",
            "delivered_bytes",
            "throughput_mbps",
        ])?;
        let mut prev: Option<(SimTime, u64)> = None;
        for s in &f.samples {
            let rate = match prev {
                Some((t, b)) if s.time > t => {
                    s.delivered_bytes.saturating_sub(b) as f64 * 8.0 / (s.time - t).as_secs_f64() / 1e6
                }
                _ => 0.0,
            };
            prev = Some((s.time, s.delivered_bytes));
            w.write_record([
                secs(s.time),
                s.w_abc.map_or(String::new(), |v| format!("{v:.3}")),
                format!("{:.3}", s.w_cubic),
                s.inflight.to_string(),
                s.delivered_bytes.to_string(),
                format!("{rate:.4}"),
            ])?;
        }
        w.flush()?;
    }

    if !shorts.is_empty() {
        let mut w = writer(&flows_dir.join("short.csv"))?;
        w.write_record(["id", "kind", "start_s", "size_bytes", "completion_s", "fct_ms"])?;
        for f in shorts {
            w.write_record([
                f.id.0.to_string(),
                f.kind.name().to_string(),
                secs(f.start),
                f.size.map_or(String::new(), |s| s.to_string()),
                f.completion.map_or(String::new(), secs),
                f.completion
                    .map_or(String::new(), |c| format!("{:.3}", (c - f.start).as_millis_f64())),
            ])?;
        }
        w.flush()?;
    }

    for h in &log.hops {
        let mut w = writer(&routers_dir.join(format!("{}.csv", h.name)))?;
        w.write_record(["dequeue_s", "flow", "seq", "size", "queue_delay_ms"])?;
        for r in &h.records {
            w.write_record([
                secs(r.dequeue),
                r.flow.0.to_string(),
                r.seq.to_string(),
                r.size.to_string(),
                format!("{:.3}", r.queue_delay().as_millis_f64()),
            ])?;
        }
        w.flush()?;

        if !h.trace.is_empty() {
            let mut w = writer(&routers_dir.join(format!("{}.marks.csv", h.name)))?;
            w.write_record(["time_s", "queue", "f", "tr_mbps", "cr_mbps", "x_ms", "token", "mark"])?;
            for d in &h.trace {
                w.write_record([
                    secs(d.time),
                    match d.queue {
                        QueueKind::Abc => "abc".to_string(),
                        QueueKind::Legacy => "legacy".to_string(),
                    },
                    format!("{:.4}", d.f),
                    format!("{:.4}", d.tr / 1e6),
                    format!("{:.4}", d.cr / 1e6),
                    format!("{:.3}", d.x.as_millis_f64()),
                    format!("{:.3}", d.token),
                    mark_name(d.mark).to_string(),
                ])?;
            }
            w.flush()?;
        }

        if !h.weights.is_empty() {
            let mut w = writer(&routers_dir.join(format!("{}.weights.csv", h.name)))?;
            w.write_record(["time_s", "abc_weight"])?;
            for &(t, v) in &h.weights {
                w.write_record([secs(t), format!("{v:.4}")])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}
