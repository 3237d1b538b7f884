//! Running a scenario end to end and writing its output files.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::model::LayerKind;
use crate::scenario::Scenario;
use crate::sim::metrics::MetricsReport;
use crate::sim::trace::format_trace;
use crate::sim::{SimError, SimEvent};

pub const TRACE_FILE: &str = "trace.txt";
pub const METRICS_FILE: &str = "metrics.json";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("inconsistent metrics: {}", .0.join("; "))]
    Inconsistent(Vec<String>),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing output: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub events: Vec<SimEvent>,
    pub report: MetricsReport,
}

/// Simulates `scenario` up to its `run.until` tick and checks the report's
/// conservation identities.
pub fn run_scenario(scenario: &Scenario, adaptive: bool, seed: u64) -> Result<RunOutput, RunError> {
    let mut sim = scenario.build(adaptive, seed)?;
    let events = sim.run(scenario.file.run.until)?;
    let report = sim.report();
    let broken = report.consistency_violations();
    if !broken.is_empty() {
        return Err(RunError::Inconsistent(broken));
    }
    Ok(RunOutput { events, report })
}

#[derive(Serialize)]
struct SummaryRow {
    layer: LayerKind,
    lookups: u64,
    served_locally: u64,
    escalated: u64,
    unresolved: u64,
    refreshes: u64,
    messages_sent: u64,
    messages_received: u64,
}

pub fn write_outputs(out_dir: &Path, output: &RunOutput) -> Result<(), RunError> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(TRACE_FILE), format_trace(&output.events))?;
    let json = serde_json::to_string_pretty(&output.report)?;
    std::fs::write(out_dir.join(METRICS_FILE), json + "\n")?;
    let mut w = csv::Writer::from_path(out_dir.join(SUMMARY_FILE))?;
    for layer in LayerKind::ALL {
        let m = output.report.layers.get(&layer).cloned().unwrap_or_default();
        w.serialize(SummaryRow {
            layer,
            lookups: m.lookups,
            served_locally: m.served_locally,
            escalated: m.escalated,
            unresolved: m.unresolved,
            refreshes: m.refreshes,
            messages_sent: m.messages_sent,
            messages_received: m.messages_received,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<MetricsReport, RunError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricDelta {
    pub name: String,
    pub a: u64,
    pub b: u64,
}

impl MetricDelta {
    pub fn diff(&self) -> i128 {
        i128::from(self.b) - i128::from(self.a)
    }
}

fn headline(r: &MetricsReport) -> Vec<(String, u64)> {
    let mut out = vec![
        ("customer_lookups".to_owned(), r.customer_lookups),
        ("served_locally".to_owned(), r.served_locally),
        ("escalated".to_owned(), r.escalated),
        ("resolved_remotely".to_owned(), r.resolved_remotely),
        ("unresolved".to_owned(), r.unresolved),
        ("requests_to_tsd".to_owned(), r.requests_to_tsd),
        ("messages_sent".to_owned(), r.total_sent()),
        ("in_flight".to_owned(), r.in_flight),
        ("switches".to_owned(), r.switches.len() as u64),
        (
            "max_staleness".to_owned(),
            r.staleness.iter().map(|s| s.staleness).max().unwrap_or(0),
        ),
    ];
    for (kind, n) in &r.messages_sent {
        out.push((format!("sent.{kind}"), *n));
    }
    for (layer, m) in &r.layers {
        out.push((format!("{layer}.lookups"), m.lookups));
        out.push((format!("{layer}.messages_received"), m.messages_received));
    }
    out
}

/// Side-by-side headline metrics of two runs, keyed by name.
pub fn compare_reports(a: &MetricsReport, b: &MetricsReport) -> Vec<MetricDelta> {
    let ha = headline(a);
    let hb = headline(b);
    let mut names: Vec<String> = ha.iter().map(|(n, _)| n.clone()).collect();
    for (n, _) in &hb {
        if !names.contains(n) {
            names.push(n.clone());
        }
    }
    let get = |h: &[(String, u64)], n: &str| h.iter().find(|(k, _)| k == n).map_or(0, |(_, v)| *v);
    names
        .into_iter()
        .map(|name| MetricDelta {
            a: get(&ha, &name),
            b: get(&hb, &name),
            name,
        })
        .collect()
}
