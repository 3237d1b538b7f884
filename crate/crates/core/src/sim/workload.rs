//! Service customer workloads: explicit event lists plus seeded generators.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directory::LookupQuery;
use crate::geo::GeoArea;
use crate::model::{
    LayerKind, NodeId, PropagationStrategy, ProviderId, ServiceDescriptor, ServiceId,
    ServiceScope, Tick, Version,
};
use crate::sim::SimAction;
use crate::topology::Topology;

/// A service as offered by its provider, before the registering node
/// stamps origin and version onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub id: ServiceId,
    #[serde(default = "default_provider")]
    pub provider: ProviderId,
    pub name: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub scope: ServiceScope,
    /// Required for local services; global services are relevant everywhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<GeoArea>,
    #[serde(default)]
    pub access: String,
    pub strategy: PropagationStrategy,
}

fn default_provider() -> ProviderId {
    ProviderId::new("anonymous")
}

impl ServiceSpec {
    pub fn check(&self) -> Result<(), String> {
        match (self.scope, &self.area) {
            (ServiceScope::Local, None) => {
                Err(format!("local service {} needs a relevance area", self.id))
            }
            (ServiceScope::Global, Some(_)) => Err(format!(
                "global service {} is relevant everywhere and takes no area",
                self.id
            )),
            _ => Ok(()),
        }
    }

    pub fn to_descriptor(&self, origin: &NodeId, version: Version) -> ServiceDescriptor {
        ServiceDescriptor {
            service_id: self.id.clone(),
            provider_id: self.provider.clone(),
            name: self.name.clone(),
            tags: self.tags.clone(),
            scope: self.scope,
            relevance_area: self.area.unwrap_or(GeoArea::FULL),
            access_description: self.access.clone(),
            version,
            origin_node: origin.clone(),
            strategy: self.strategy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrationSpec {
    pub tick: Tick,
    pub node: NodeId,
    pub service: ServiceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeregistrationSpec {
    pub tick: Tick,
    pub node: NodeId,
    pub service_id: ServiceId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupSpec {
    pub tick: Tick,
    pub lsd: NodeId,
    #[serde(default)]
    pub query: LookupQuery,
}

/// Poisson customer arrivals at LSDs with power-law service popularity.
///
/// Each tick in `[start, end)` every selected LSD draws a Poisson(`rate`)
/// number of lookups. Each lookup asks by name for one registered service;
/// the k-th distinct name in registration order has weight `1 / k^skew`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupGenerator {
    pub rate: f64,
    #[serde(default)]
    pub skew: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub start: Tick,
    pub end: Tick,
    /// Restrict arrivals to these LSDs; all LSDs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lsds: Option<Vec<NodeId>>,
    /// Restrict the popularity ranking to these service names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default)]
    pub registrations: Vec<RegistrationSpec>,
    #[serde(default)]
    pub deregistrations: Vec<DeregistrationSpec>,
    #[serde(default)]
    pub lookups: Vec<LookupSpec>,
    #[serde(default)]
    pub generators: Vec<LookupGenerator>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("lookups[{index}] targets {node}, which is a {layer}; customers only talk to LSDs")]
    LookupAtNonLsd {
        index: usize,
        node: NodeId,
        layer: LayerKind,
    },
    #[error("{location} references unknown node {node}")]
    UnknownNode { location: String, node: NodeId },
    #[error("generators[{index}]: {reason}")]
    InvalidGenerator { index: usize, reason: String },
}

/// Expands `spec` into timestamped actions.
///
/// Explicit entries pass through unchanged. Within one tick the order is
/// registrations, deregistrations, explicit lookups, generated lookups,
/// each in declaration order.
pub fn generate_workload(
    spec: &WorkloadSpec,
    topology: &Topology,
    seed: u64,
) -> Result<Vec<(Tick, SimAction)>, WorkloadError> {
    let require = |location: String, node: &NodeId| {
        if topology.contains(node) {
            Ok(())
        } else {
            Err(WorkloadError::UnknownNode {
                location,
                node: node.clone(),
            })
        }
    };

    let mut out: Vec<(Tick, SimAction)> = Vec::new();
    for (i, r) in spec.registrations.iter().enumerate() {
        require(format!("registrations[{i}].node"), &r.node)?;
        out.push((
            r.tick,
            SimAction::RegisterService {
                node: r.node.clone(),
                service: r.service.clone(),
            },
        ));
    }
    for (i, d) in spec.deregistrations.iter().enumerate() {
        require(format!("deregistrations[{i}].node"), &d.node)?;
        out.push((
            d.tick,
            SimAction::DeregisterService {
                node: d.node.clone(),
                service_id: d.service_id.clone(),
            },
        ));
    }
    for (i, l) in spec.lookups.iter().enumerate() {
        require(format!("lookups[{i}].lsd"), &l.lsd)?;
        let layer = topology.layer(&l.lsd).expect("checked above");
        if layer != LayerKind::Lsd {
            return Err(WorkloadError::LookupAtNonLsd {
                index: i,
                node: l.lsd.clone(),
                layer,
            });
        }
        out.push((
            l.tick,
            SimAction::CustomerLookup {
                lsd: l.lsd.clone(),
                query: l.query.clone(),
            },
        ));
    }

    let mut names: Vec<&str> = Vec::new();
    for r in &spec.registrations {
        if !names.contains(&r.service.name.as_str()) {
            names.push(&r.service.name);
        }
    }
    let mut shared_rng = ChaCha8Rng::seed_from_u64(seed);
    for (index, g) in spec.generators.iter().enumerate() {
        let invalid = |reason: String| WorkloadError::InvalidGenerator { index, reason };
        if !(g.rate.is_finite() && g.rate >= 0.0) {
            return Err(invalid(format!("rate must be a non-negative number, got {}", g.rate)));
        }
        if !(g.skew.is_finite() && g.skew >= 0.0) {
            return Err(invalid(format!("skew must be a non-negative number, got {}", g.skew)));
        }
        if g.end < g.start {
            return Err(invalid(format!("end {} precedes start {}", g.end, g.start)));
        }
        let lsds: Vec<NodeId> = match &g.lsds {
            Some(list) => {
                for (j, lsd) in list.iter().enumerate() {
                    require(format!("generators[{index}].lsds[{j}]"), lsd)?;
                    if topology.layer(lsd) != Some(LayerKind::Lsd) {
                        return Err(invalid(format!("{lsd} is not an LSD")));
                    }
                }
                list.clone()
            }
            None => topology.nodes_in_layer(LayerKind::Lsd).cloned().collect(),
        };
        let pool: Vec<&str> = match &g.services {
            Some(only) => {
                for name in only {
                    if !names.contains(&name.as_str()) {
                        return Err(invalid(format!("service name {name:?} is never registered")));
                    }
                }
                only.iter().map(String::as_str).collect()
            }
            None => names.clone(),
        };
        if g.rate == 0.0 || pool.is_empty() || lsds.is_empty() {
            continue;
        }
        let arrivals = Poisson::new(g.rate).map_err(|e| invalid(e.to_string()))?;
        let weights: Vec<f64> = (1..=pool.len())
            .map(|k| 1.0 / (k as f64).powf(g.skew))
            .collect();
        let popularity = WeightedIndex::new(&weights).map_err(|e| invalid(e.to_string()))?;
        let mut own_rng = g.seed.map(ChaCha8Rng::seed_from_u64);
        let rng = own_rng.as_mut().unwrap_or(&mut shared_rng);
        for tick in g.start..g.end {
            for lsd in &lsds {
                let count = arrivals.sample(rng) as u64;
                for _ in 0..count {
                    let name = pool[popularity.sample(rng)];
                    out.push((
                        tick,
                        SimAction::CustomerLookup {
                            lsd: lsd.clone(),
                            query: LookupQuery::by_name(name),
                        },
                    ));
                }
            }
        }
    }

    out.sort_by_key(|(tick, _)| *tick);
    Ok(out)
}
