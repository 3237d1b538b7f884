//! JSON scenario files: topology, parameters, workload and run settings.
//!
//! ```json
//! {
//!   "topology": { "nodes": [...], "edges": [...] },
//!   "params":   { "base_ttl": 100, "seed": 7 },
//!   "workload": { "registrations": [...], "lookups": [...] },
//!   "run":      { "until": 1000, "adaptive": false }
//! }
//! ```
//!
//! Every section except `topology` may be omitted; missing fields take the
//! defaults of [`ScenarioParams`] and [`RunSettings`]. Unknown fields are
//! rejected.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptive::SwitchPolicy;
use crate::directory::DEFAULT_BASE_TTL;
use crate::model::{LayerKind, ServiceId, Tick};
use crate::sim::workload::{generate_workload, WorkloadError, WorkloadSpec};
use crate::sim::{SimError, SimParams, Simulation};
use crate::topology::{validate_topology, Topology, TopologySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioParams {
    pub base_ttl: Tick,
    pub peer_sync_period: Tick,
    pub window_length: Tick,
    pub policy: SwitchPolicy,
    pub default_latency: Tick,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peer_latency: Option<Tick>,
    /// Seed for generated lookups.
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        let sim = SimParams::default();
        Self {
            base_ttl: DEFAULT_BASE_TTL,
            peer_sync_period: sim.peer_sync_period,
            window_length: sim.window_length,
            policy: sim.policy,
            default_latency: sim.default_latency,
            peer_latency: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    /// Last tick simulated; also the horizon for periodic events.
    pub until: Tick,
    pub adaptive: bool,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            until: 1000,
            adaptive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub topology: TopologySpec,
    #[serde(default)]
    pub params: ScenarioParams,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub run: RunSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    Topology,
    DanglingReference,
    InvalidValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub kind: IssueKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: {message}")]
    UnknownField {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid { issues: Vec<Issue> },
}

/// A scenario whose topology and references have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub topology: Topology,
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = serde_json::from_str(text).map_err(|e| {
        let (line, column, message) = (e.line(), e.column(), e.to_string());
        if message.starts_with("unknown field") {
            ScenarioError::UnknownField {
                line,
                column,
                message,
            }
        } else {
            ScenarioError::Syntax {
                line,
                column,
                message,
            }
        }
    })?;
    validate(file)
}

pub fn write_scenario(path: &Path, file: &ScenarioFile) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(file).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

pub fn validate(file: ScenarioFile) -> Result<Scenario, ScenarioError> {
    let mut issues = Vec::new();
    let mut invalid = |kind, location: &str, message: String| {
        issues.push(Issue {
            kind,
            location: location.to_owned(),
            message,
        })
    };

    let p = &file.params;
    if p.base_ttl == 0 {
        invalid(IssueKind::InvalidValue, "params.base_ttl", "must be at least 1".into());
    }
    if p.window_length == 0 {
        invalid(IssueKind::InvalidValue, "params.window_length", "must be at least 1".into());
    }
    if p.peer_sync_period == 0 {
        invalid(IssueKind::InvalidValue, "params.peer_sync_period", "must be at least 1".into());
    }
    if p.default_latency == 0 {
        invalid(IssueKind::InvalidValue, "params.default_latency", "must be at least 1".into());
    }
    if p.peer_latency == Some(0) {
        invalid(IssueKind::InvalidValue, "params.peer_latency", "must be at least 1".into());
    }
    if let Err(e) = p.policy.validate() {
        invalid(IssueKind::InvalidValue, "params.policy", e.to_string());
    }

    let topology = match validate_topology(&file.topology) {
        Ok(t) => Some(t),
        Err(violations) => {
            for v in violations {
                invalid(IssueKind::Topology, "topology", v.to_string());
            }
            None
        }
    };

    let w = &file.workload;
    let mut registered: BTreeSet<&ServiceId> = BTreeSet::new();
    for (i, r) in w.registrations.iter().enumerate() {
        if let Err(m) = r.service.check() {
            invalid(IssueKind::InvalidValue, &format!("workload.registrations[{i}].service"), m);
        }
        if let Some(t) = &topology {
            let scope_ok = t
                .layer(&r.node)
                .is_none_or(|l| r.service.scope.registrable_at(l));
            if !scope_ok {
                invalid(
                    IssueKind::InvalidValue,
                    &format!("workload.registrations[{i}]"),
                    format!(
                        "{} service {} cannot be registered at {} {}",
                        r.service.scope.as_str(),
                        r.service.id,
                        t.layer(&r.node).map_or("?", LayerKind::as_str),
                        r.node
                    ),
                );
            }
        }
        registered.insert(&r.service.id);
    }
    for (i, d) in w.deregistrations.iter().enumerate() {
        if !registered.contains(&d.service_id) {
            invalid(
                IssueKind::DanglingReference,
                &format!("workload.deregistrations[{i}].service_id"),
                format!("service {} is never registered", d.service_id),
            );
        }
    }
    if let Some(t) = &topology {
        if let Err(e) = generate_workload(w, t, p.seed) {
            let kind = match e {
                WorkloadError::UnknownNode { .. } => IssueKind::DanglingReference,
                _ => IssueKind::InvalidValue,
            };
            invalid(kind, "workload", e.to_string());
        }
    }

    match topology {
        Some(topology) if issues.is_empty() => Ok(Scenario { file, topology }),
        _ => Err(ScenarioError::Invalid { issues }),
    }
}

impl Scenario {
    pub fn sim_params(&self, adaptive: bool) -> SimParams {
        let p = &self.file.params;
        SimParams {
            base_ttl: p.base_ttl,
            peer_sync_period: p.peer_sync_period,
            window_length: p.window_length,
            policy: p.policy,
            default_latency: p.default_latency,
            peer_latency: p.peer_latency,
            adaptive,
            horizon: self.file.run.until,
        }
    }

    /// A simulation with the workload scheduled, ready to run.
    pub fn build(&self, adaptive: bool, seed: u64) -> Result<Simulation, SimError> {
        let mut sim = Simulation::new(self.topology.clone(), self.sim_params(adaptive));
        let events = generate_workload(&self.file.workload, &self.topology, seed)
            .expect("workload checked during validation");
        sim.schedule_workload(events)?;
        Ok(sim)
    }
}
