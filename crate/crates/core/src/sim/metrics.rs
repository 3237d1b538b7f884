//! Run metrics: per-layer load, cache behaviour, message counts, staleness
//! and strategy switches.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adaptive::SwitchDecision;
use crate::model::{LayerKind, NodeId, ServiceId, Tick};
use crate::propagation::MessageKind;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerMetrics {
    /// Customer lookups (LSD) or upward requests (NSD/TSD) handled here.
    pub lookups: u64,
    /// Answered from this node's own entries.
    pub served_locally: u64,
    /// Passed on to the parent.
    pub escalated: u64,
    /// Answered empty at the top of the hierarchy.
    pub unresolved: u64,
    pub refreshes: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LsdCacheMetrics {
    pub hits: u64,
    pub misses: u64,
    pub refreshes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StalenessSample {
    pub service_id: ServiceId,
    pub deleted_at: Tick,
    /// Last tick any customer was handed the service after its deletion.
    pub last_served_after_delete: Option<Tick>,
    pub staleness: Tick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub tick: Tick,
    pub service_id: ServiceId,
    pub decision: SwitchDecision,
    pub hotness: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SwitchCounts {
    pub promotions: u64,
    pub demotions: u64,
}

/// Summary of one run, serialized as the metrics JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub final_tick: Tick,
    pub customer_lookups: u64,
    pub served_locally: u64,
    pub escalated: u64,
    /// Escalations answered with at least one descriptor.
    pub resolved_remotely: u64,
    pub unresolved: u64,
    pub layers: BTreeMap<LayerKind, LayerMetrics>,
    pub lsd_cache: BTreeMap<NodeId, LsdCacheMetrics>,
    pub messages_sent: BTreeMap<MessageKind, u64>,
    pub messages_delivered: BTreeMap<MessageKind, u64>,
    /// Keyed `"<kind> <from layer>-><to layer>"`.
    pub layer_crossings: BTreeMap<String, u64>,
    pub requests_to_tsd: u64,
    pub in_flight: u64,
    pub ignored_stores: u64,
    pub rejected_registrations: u64,
    pub rejected_deregistrations: u64,
    pub staleness: Vec<StalenessSample>,
    pub switches: Vec<SwitchEvent>,
    pub switch_counts: BTreeMap<ServiceId, SwitchCounts>,
    /// Descriptors handed to customers, per service and LSD.
    pub demand: BTreeMap<ServiceId, BTreeMap<NodeId, u64>>,
}

impl MetricsReport {
    pub fn total_sent(&self) -> u64 {
        self.messages_sent.values().sum()
    }

    pub fn total_delivered(&self) -> u64 {
        self.messages_delivered.values().sum()
    }

    /// Conservation identities every emitted report must satisfy. Returns
    /// a description of each broken identity.
    pub fn consistency_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.served_locally + self.escalated != self.customer_lookups {
            out.push(format!(
                "served_locally {} + escalated {} != customer lookups {}",
                self.served_locally, self.escalated, self.customer_lookups
            ));
        }
        if self.total_sent() != self.total_delivered() + self.in_flight {
            out.push(format!(
                "sent {} != delivered {} + in flight {}",
                self.total_sent(),
                self.total_delivered(),
                self.in_flight
            ));
        }
        let answered = self.resolved_remotely + self.unresolved;
        if answered > self.escalated || self.escalated - answered > self.in_flight {
            out.push(format!(
                "resolved {} + unresolved {} does not account for {} escalations ({} in flight)",
                self.resolved_remotely, self.unresolved, self.escalated, self.in_flight
            ));
        }
        let lsd = self.layers.get(&LayerKind::Lsd).cloned().unwrap_or_default();
        if lsd.lookups != self.customer_lookups {
            out.push(format!(
                "LSD layer lookups {} != customer lookups {}",
                lsd.lookups, self.customer_lookups
            ));
        }
        let (hits, misses) = self
            .lsd_cache
            .values()
            .fold((0, 0), |(h, m), c| (h + c.hits, m + c.misses));
        if hits != self.served_locally || misses != self.escalated {
            out.push(format!(
                "per-LSD hits/misses {hits}/{misses} disagree with totals {}/{}",
                self.served_locally, self.escalated
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct MetricsAccumulator {
    pub report: MetricsReport,
    deleted_at: BTreeMap<ServiceId, Tick>,
    served_after_delete: BTreeMap<ServiceId, Tick>,
    closed_staleness: Vec<StalenessSample>,
}

impl MetricsAccumulator {
    pub fn layer(&mut self, layer: LayerKind) -> &mut LayerMetrics {
        self.report.layers.entry(layer).or_default()
    }

    pub fn lsd(&mut self, lsd: &NodeId) -> &mut LsdCacheMetrics {
        self.report.lsd_cache.entry(lsd.clone()).or_default()
    }

    pub fn sent(&mut self, kind: MessageKind, from: LayerKind, to: LayerKind) {
        *self.report.messages_sent.entry(kind).or_default() += 1;
        *self
            .report
            .layer_crossings
            .entry(format!("{kind} {from}->{to}"))
            .or_default() += 1;
        self.layer(from).messages_sent += 1;
    }

    pub fn delivered(&mut self, kind: MessageKind, to: LayerKind) {
        *self.report.messages_delivered.entry(kind).or_default() += 1;
        self.layer(to).messages_received += 1;
        if kind == MessageKind::Request && to == LayerKind::Tsd {
            self.report.requests_to_tsd += 1;
        }
    }

    /// A customer at `lsd` was handed `ids` at `now`.
    pub fn served<'a>(&mut self, lsd: &NodeId, ids: impl IntoIterator<Item = &'a ServiceId>, now: Tick) {
        for id in ids {
            *self
                .report
                .demand
                .entry(id.clone())
                .or_default()
                .entry(lsd.clone())
                .or_default() += 1;
            if self.deleted_at.get(id).is_some_and(|d| *d <= now) {
                self.served_after_delete.insert(id.clone(), now);
            }
        }
    }

    pub fn deleted(&mut self, id: &ServiceId, now: Tick) {
        self.close_staleness(id);
        self.deleted_at.insert(id.clone(), now);
    }

    pub fn reregistered(&mut self, id: &ServiceId) {
        self.close_staleness(id);
    }

    fn close_staleness(&mut self, id: &ServiceId) {
        if let Some(deleted_at) = self.deleted_at.remove(id) {
            let last = self.served_after_delete.remove(id);
            self.closed_staleness.push(StalenessSample {
                service_id: id.clone(),
                deleted_at,
                last_served_after_delete: last,
                staleness: last.map_or(0, |l| l - deleted_at),
            });
        }
    }

    pub fn switched(&mut self, event: SwitchEvent) {
        let counts = self
            .report
            .switch_counts
            .entry(event.service_id.clone())
            .or_default();
        match event.decision {
            SwitchDecision::PromoteToPpp => counts.promotions += 1,
            SwitchDecision::DemoteToVrp => counts.demotions += 1,
            SwitchDecision::NoChange => {}
        }
        self.report.switches.push(event);
    }

    pub fn finish(&self, final_tick: Tick, in_flight: u64) -> MetricsReport {
        let mut report = self.report.clone();
        report.final_tick = final_tick;
        report.in_flight = in_flight;
        let mut samples = self.closed_staleness.clone();
        for (id, deleted_at) in &self.deleted_at {
            let last = self.served_after_delete.get(id).copied();
            samples.push(StalenessSample {
                service_id: id.clone(),
                deleted_at: *deleted_at,
                last_served_after_delete: last,
                staleness: last.map_or(0, |l| l - deleted_at),
            });
        }
        samples.sort_by(|a, b| (a.deleted_at, &a.service_id).cmp(&(b.deleted_at, &b.service_id)));
        report.staleness = samples;
        for layer in LayerKind::ALL {
            report.layers.entry(layer).or_default();
        }
        report
    }
}
