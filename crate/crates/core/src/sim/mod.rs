//! Deterministic discrete-event simulation of the directory hierarchy.
//!
//! Events sit in a queue ordered by `(tick, seq)` where `seq` is a global
//! insertion counter, so runs are reproducible bit for bit. Messages travel
//! one edge at a time with a per-edge latency of at least one tick.

pub mod metrics;
pub mod trace;
pub mod workload;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptive::{aggregate_hotness, recommend, SwitchDecision, SwitchPolicy};
use crate::directory::{DirectoryState, EntryKind, LookupQuery, DEFAULT_BASE_TTL};
use crate::geo::GeoArea;
use crate::model::{
    LayerKind, NodeId, PropagationStrategy, ServiceDescriptor, ServiceId, ServiceScope, Tick,
    Tombstone, Version,
};
use crate::propagation::{
    check_edge_legal, merge_digest, replica_digest, MessageKind, Payload, PropagationMessage,
    ReplicaDigest,
};
use crate::topology::Topology;

use metrics::{MetricsAccumulator, MetricsReport, SwitchEvent};
use workload::ServiceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    pub base_ttl: Tick,
    /// Ticks between anti-entropy rounds among TSDs.
    pub peer_sync_period: Tick,
    /// Utilization window, also the period of adaptive reviews.
    pub window_length: Tick,
    pub policy: SwitchPolicy,
    /// Latency of edges without an explicit override.
    pub default_latency: Tick,
    /// Latency between TSD peers when the topology does not set one.
    pub peer_latency: Option<Tick>,
    pub adaptive: bool,
    /// No periodic event is scheduled after this tick.
    pub horizon: Tick,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            base_ttl: DEFAULT_BASE_TTL,
            peer_sync_period: 50,
            window_length: 100,
            policy: SwitchPolicy::default(),
            default_latency: 1,
            peer_latency: None,
            adaptive: false,
            horizon: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimAction {
    DeliverMessage(PropagationMessage),
    CustomerLookup {
        lsd: NodeId,
        query: LookupQuery,
    },
    RegisterService {
        node: NodeId,
        service: ServiceSpec,
    },
    DeregisterService {
        node: NodeId,
        service_id: ServiceId,
    },
    PeerSyncRound,
    ExpirySweep {
        node: NodeId,
    },
    UtilizationReview,
    StrategySwitch {
        service_id: ServiceId,
        decision: SwitchDecision,
        hotness: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent {
    pub at: Tick,
    pub seq: u64,
    pub action: SimAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("illegal {kind} message on edge {from} -> {to}")]
    IllegalEdge {
        kind: MessageKind,
        from: NodeId,
        to: NodeId,
    },
    #[error("customer lookup at {0}, which is not an LSD")]
    LookupAtNonLsd(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("service {0} is not currently registered")]
    UnknownService(ServiceId),
    #[error("event scheduled at {at} precedes the clock {clock}")]
    PastEvent { at: Tick, clock: Tick },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    topology: Topology,
    params: SimParams,
    clock: Tick,
    next_seq: u64,
    queue: BTreeMap<(Tick, u64), SimAction>,
    nodes: BTreeMap<NodeId, DirectoryState>,
    metrics: MetricsAccumulator,
    pending_sweeps: BTreeSet<(Tick, NodeId)>,
    origins: BTreeMap<ServiceId, NodeId>,
    last_switch: BTreeMap<ServiceId, Tick>,
}

/// One empty directory per topology node, each with `base_ttl`.
pub fn build_network(topology: &Topology, base_ttl: Tick) -> BTreeMap<NodeId, DirectoryState> {
    topology
        .node_ids()
        .map(|id| {
            let layer = topology.layer(id).expect("listed node");
            (id.clone(), DirectoryState::new(id.clone(), layer, base_ttl))
        })
        .collect()
}

impl Simulation {
    pub fn new(topology: Topology, params: SimParams) -> Self {
        let nodes = build_network(&topology, params.base_ttl);
        let mut sim = Self {
            topology,
            params,
            clock: 0,
            next_seq: 0,
            queue: BTreeMap::new(),
            nodes,
            metrics: MetricsAccumulator::default(),
            pending_sweeps: BTreeSet::new(),
            origins: BTreeMap::new(),
            last_switch: BTreeMap::new(),
        };
        let period = sim.params.peer_sync_period;
        if sim.topology.tsds().len() >= 2 && period >= 1 && period <= sim.params.horizon {
            sim.schedule(period, SimAction::PeerSyncRound);
        }
        let window = sim.params.window_length;
        if sim.params.adaptive && window >= 1 && window <= sim.params.horizon {
            sim.schedule(window, SimAction::UtilizationReview);
        }
        sim
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn clock(&self) -> Tick {
        self.clock
    }

    pub fn node(&self, id: &NodeId) -> Option<&DirectoryState> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, DirectoryState> {
        &self.nodes
    }

    /// Node where each currently registered service lives.
    pub fn origins(&self) -> &BTreeMap<ServiceId, NodeId> {
        &self.origins
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_tick(&self) -> Option<Tick> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    pub fn schedule(&mut self, at: Tick, action: SimAction) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.insert((at, seq), action);
    }

    pub fn schedule_workload(&mut self, events: impl IntoIterator<Item = (Tick, SimAction)>) -> Result<(), SimError> {
        for (at, action) in events {
            if at < self.clock {
                return Err(SimError::PastEvent { at, clock: self.clock });
            }
            self.schedule(at, action);
        }
        Ok(())
    }

    /// Pops and executes the next event.
    pub fn step(&mut self) -> Result<Option<SimEvent>, SimError> {
        let Some(((at, seq), action)) = self.queue.pop_first() else {
            return Ok(None);
        };
        self.clock = at;
        self.execute(&action)?;
        Ok(Some(SimEvent { at, seq, action }))
    }

    /// Runs every event scheduled at or before `until`.
    pub fn run(&mut self, until: Tick) -> Result<Vec<SimEvent>, SimError> {
        let mut out = Vec::new();
        while self.next_event_tick().is_some_and(|t| t <= until) {
            out.extend(self.step()?);
        }
        if self.clock < until {
            self.clock = until;
        }
        Ok(out)
    }

    /// Runs until the queue is empty. Periodic events stop at the horizon,
    /// so this terminates.
    pub fn run_to_quiescence(&mut self) -> Result<Vec<SimEvent>, SimError> {
        let mut out = Vec::new();
        while let Some(e) = self.step()? {
            out.push(e);
        }
        Ok(out)
    }

    pub fn report(&self) -> MetricsReport {
        let in_flight = self
            .queue
            .values()
            .filter(|a| matches!(a, SimAction::DeliverMessage(_)))
            .count() as u64;
        self.metrics.finish(self.clock, in_flight)
    }

    fn execute(&mut self, action: &SimAction) -> Result<(), SimError> {
        match action {
            SimAction::DeliverMessage(msg) => self.deliver(msg),
            SimAction::CustomerLookup { lsd, query } => self.customer_lookup(lsd, query),
            SimAction::RegisterService { node, service } => self.register(node, service),
            SimAction::DeregisterService { node, service_id } => self.deregister(node, service_id),
            SimAction::PeerSyncRound => {
                self.peer_sync_round();
                Ok(())
            }
            SimAction::ExpirySweep { node } => self.sweep(node),
            SimAction::UtilizationReview => {
                self.review();
                Ok(())
            }
            SimAction::StrategySwitch {
                service_id,
                decision,
                hotness,
            } => {
                if self.apply_switch(service_id, *decision)? {
                    self.metrics.switched(SwitchEvent {
                        tick: self.clock,
                        service_id: service_id.clone(),
                        decision: *decision,
                        hotness: *hotness,
                    });
                }
                Ok(())
            }
        }
    }

    fn state_mut(&mut self, id: &NodeId) -> Result<&mut DirectoryState, SimError> {
        self.nodes.get_mut(id).ok_or_else(|| SimError::UnknownNode(id.clone()))
    }

    fn layer_of(&self, id: &NodeId) -> LayerKind {
        self.topology.layer(id).expect("messages only address known nodes")
    }

    fn send(&mut self, from: &NodeId, to: &NodeId, payload: Payload) {
        let msg = PropagationMessage {
            from: from.clone(),
            to: to.clone(),
            sent_at: self.clock,
            payload,
        };
        let kind = msg.kind();
        let latency = match self.topology.latency_override(from, to) {
            Some(l) => l,
            None if kind == MessageKind::PeerSync => {
                self.params.peer_latency.unwrap_or(self.params.default_latency)
            }
            None => self.params.default_latency,
        }
        .max(1);
        let (fl, tl) = (self.layer_of(from), self.layer_of(to));
        self.metrics.sent(kind, fl, tl);
        self.schedule(self.clock + latency, SimAction::DeliverMessage(msg));
    }

    fn ensure_sweep(&mut self, node: &NodeId, at: Tick) {
        if self.pending_sweeps.insert((at, node.clone())) {
            self.schedule(at, SimAction::ExpirySweep { node: node.clone() });
        }
    }

    /// Pushes an update of a service downward from `from`.
    ///
    /// The push reaches every child whose subtree is in scope of the new
    /// area (when the new version is persistent) or of the previous area
    /// (when the previous version was persistent and its copies now need
    /// replacing).
    fn fan_out(&mut self, from: &NodeId, prev: Option<&ServiceDescriptor>, new: &ServiceDescriptor) {
        let mut reach: Vec<GeoArea> = Vec::new();
        if new.strategy == PropagationStrategy::Ppp {
            reach.push(new.relevance_area);
        }
        if let Some(p) = prev.filter(|p| p.strategy == PropagationStrategy::Ppp) {
            if !reach.contains(&p.relevance_area) {
                reach.push(p.relevance_area);
            }
        }
        self.forward_push(from, new, &reach);
    }

    fn forward_push(&mut self, from: &NodeId, desc: &ServiceDescriptor, reach: &[GeoArea]) {
        if reach.is_empty() {
            return;
        }
        let children = self.topology.children(from).to_vec();
        for child in children {
            if reach.iter().any(|a| self.topology.in_scope(&child, a)) {
                self.send(
                    from,
                    &child,
                    Payload::Push {
                        descriptor: desc.clone(),
                        reach: reach.to_vec(),
                    },
                );
            }
        }
    }

    /// Deletions visit the whole subtree: volatile copies of older
    /// versions may sit outside the current relevance area.
    fn forward_delete(&mut self, from: &NodeId, tombstone: &Tombstone) {
        let children = self.topology.children(from).to_vec();
        for child in children {
            self.send(
                from,
                &child,
                Payload::DeleteSync {
                    tombstone: tombstone.clone(),
                },
            );
        }
    }

    fn register(&mut self, node: &NodeId, service: &ServiceSpec) -> Result<(), SimError> {
        let now = self.clock;
        if service.check().is_err() {
            self.metrics.report.rejected_registrations += 1;
            return Ok(());
        }
        let state = self.state_mut(node)?;
        let prev = state
            .entry(&service.id)
            .filter(|e| e.kind == EntryKind::Registered)
            .map(|e| e.descriptor.clone());
        let ts = state
            .known_version(&service.id)
            .map_or(now, |v| now.max(v.timestamp + 1));
        let desc = service.to_descriptor(node, Version::new(ts, node.clone()));
        match state.register_service(desc.clone(), now) {
            Ok(()) => {
                self.origins.insert(desc.service_id.clone(), node.clone());
                self.metrics.reregistered(&desc.service_id);
                self.fan_out(node, prev.as_ref(), &desc);
            }
            Err(_) => self.metrics.report.rejected_registrations += 1,
        }
        Ok(())
    }

    fn deregister(&mut self, node: &NodeId, id: &ServiceId) -> Result<(), SimError> {
        let now = self.clock;
        let state = self.state_mut(node)?;
        let Ok(dereg) = state.deregister_service(id, now) else {
            self.metrics.report.rejected_deregistrations += 1;
            return Ok(());
        };
        if self.origins.get(id) == Some(node) {
            self.origins.remove(id);
        }
        self.metrics.deleted(id, now);
        self.forward_delete(node, &dereg.tombstone);
        if self.layer_of(node) == LayerKind::Tsd {
            let digest = ReplicaDigest {
                entries: BTreeMap::new(),
                tombstones: BTreeMap::from([(id.clone(), dereg.tombstone.clone())]),
            };
            let peers: Vec<NodeId> = self.topology.tsds().iter().filter(|t| *t != node).cloned().collect();
            for peer in peers {
                self.send(node, &peer, Payload::PeerSync { digest: digest.clone() });
            }
        }
        Ok(())
    }

    fn customer_lookup(&mut self, lsd: &NodeId, query: &LookupQuery) -> Result<(), SimError> {
        let now = self.clock;
        if self.topology.layer(lsd) != Some(LayerKind::Lsd) {
            return Err(match self.topology.layer(lsd) {
                None => SimError::UnknownNode(lsd.clone()),
                Some(_) => SimError::LookupAtNonLsd(lsd.clone()),
            });
        }
        self.metrics.report.customer_lookups += 1;
        self.metrics.layer(LayerKind::Lsd).lookups += 1;
        let state = self.state_mut(lsd)?;
        let outcome = state.lookup(query, now);
        let refreshed = refresh_volatile(state, &outcome.matches, now);
        for at in &refreshed {
            self.ensure_sweep(lsd, *at);
        }
        self.metrics.layer(LayerKind::Lsd).refreshes += refreshed.len() as u64;
        self.metrics.lsd(lsd).refreshes += refreshed.len() as u64;
        if outcome.miss {
            self.metrics.report.escalated += 1;
            self.metrics.layer(LayerKind::Lsd).escalated += 1;
            self.metrics.lsd(lsd).misses += 1;
            let parent = self.topology.parent(lsd).expect("LSDs have a parent").clone();
            self.send(
                lsd,
                &parent,
                Payload::Request {
                    query: query.clone(),
                    hop_chain: vec![lsd.clone()],
                },
            );
        } else {
            self.metrics.report.served_locally += 1;
            self.metrics.layer(LayerKind::Lsd).served_locally += 1;
            self.metrics.lsd(lsd).hits += 1;
            self.metrics
                .served(lsd, outcome.matches.iter().map(|d| &d.service_id), now);
        }
        Ok(())
    }

    fn deliver(&mut self, msg: &PropagationMessage) -> Result<(), SimError> {
        if !check_edge_legal(&self.topology, msg) {
            return Err(SimError::IllegalEdge {
                kind: msg.kind(),
                from: msg.from.clone(),
                to: msg.to.clone(),
            });
        }
        let to_layer = self.layer_of(&msg.to);
        self.metrics.delivered(msg.kind(), to_layer);
        let now = self.clock;
        let to = &msg.to;
        match &msg.payload {
            Payload::Push { descriptor, reach } => {
                let in_scope = self.topology.in_scope(to, &descriptor.relevance_area);
                let persistent = descriptor.strategy == PropagationStrategy::Ppp;
                let state = self.state_mut(to)?;
                if !in_scope {
                    state.discard_older(descriptor);
                } else if persistent {
                    let outcome = state.store_propagated(
                        descriptor.clone(),
                        EntryKind::PersistentPropagated,
                        None,
                        now,
                    );
                    if !outcome.applied() {
                        self.metrics.report.ignored_stores += 1;
                    }
                } else if state.demote_copy(descriptor, now) {
                    let at = now + state.base_ttl();
                    self.ensure_sweep(to, at);
                }
                self.forward_push(to, descriptor, reach);
            }
            Payload::DeleteSync { tombstone } => {
                self.state_mut(to)?.apply_tombstone(tombstone);
                self.forward_delete(to, tombstone);
            }
            Payload::Request { query, hop_chain } => {
                self.handle_request(to, query, hop_chain);
            }
            Payload::Response {
                query,
                descriptors,
                hop_chain,
            } => {
                self.handle_response(to, query, descriptors, hop_chain)?;
            }
            Payload::PeerSync { digest } => {
                let state = self.state_mut(to)?;
                let before = state.tombstones().clone();
                let changes = merge_digest(state, digest, now);
                let fresh: Vec<Tombstone> = state
                    .tombstones()
                    .values()
                    .filter(|t| before.get(&t.service_id) != Some(*t))
                    .cloned()
                    .collect();
                for (prev, new) in &changes.adopted {
                    self.fan_out(to, prev.as_ref(), new);
                }
                for tomb in fresh {
                    self.forward_delete(to, &tomb);
                }
            }
        }
        Ok(())
    }

    fn handle_request(&mut self, at: &NodeId, query: &LookupQuery, hop_chain: &[NodeId]) {
        let now = self.clock;
        let layer = self.layer_of(at);
        let origin_lsd = hop_chain.first().expect("chains start at an LSD");
        let coverage = self.topology.coverage(origin_lsd).copied();
        let state = self.nodes.get_mut(at).expect("legal edge");
        let matches = state.find(query, now, coverage.as_ref());
        let refreshed = refresh_volatile(state, &matches, now);
        for t in &refreshed {
            self.ensure_sweep(at, *t);
        }
        let m = self.metrics.layer(layer);
        m.lookups += 1;
        m.refreshes += refreshed.len() as u64;
        let parent = self.topology.parent(at).cloned();
        let reply_to = hop_chain.last().expect("non-empty chain").clone();
        match parent {
            Some(parent) if matches.is_empty() => {
                self.metrics.layer(layer).escalated += 1;
                let mut chain = hop_chain.to_vec();
                chain.push(at.clone());
                self.send(
                    at,
                    &parent,
                    Payload::Request {
                        query: query.clone(),
                        hop_chain: chain,
                    },
                );
            }
            _ => {
                if matches.is_empty() {
                    self.metrics.layer(layer).unresolved += 1;
                } else {
                    self.metrics.layer(layer).served_locally += 1;
                }
                self.send(
                    at,
                    &reply_to,
                    Payload::Response {
                        query: query.clone(),
                        descriptors: matches,
                        hop_chain: hop_chain.to_vec(),
                    },
                );
            }
        }
    }

    fn handle_response(
        &mut self,
        at: &NodeId,
        query: &LookupQuery,
        descriptors: &[ServiceDescriptor],
        hop_chain: &[NodeId],
    ) -> Result<(), SimError> {
        let now = self.clock;
        let idx = hop_chain
            .iter()
            .position(|n| n == at)
            .ok_or_else(|| SimError::UnknownNode(at.clone()))?;
        let ttl = self.params.base_ttl;
        let state = self.state_mut(at)?;
        let mut ignored = 0;
        let mut cached = false;
        for d in descriptors {
            if state
                .store_propagated(d.clone(), EntryKind::VolatileCached, Some(ttl), now)
                .applied()
            {
                cached = true;
            } else {
                ignored += 1;
            }
        }
        self.metrics.report.ignored_stores += ignored;
        if cached {
            self.ensure_sweep(at, now + ttl);
        }
        if idx > 0 {
            let next = hop_chain[idx - 1].clone();
            self.send(
                at,
                &next,
                Payload::Response {
                    query: query.clone(),
                    descriptors: descriptors.to_vec(),
                    hop_chain: hop_chain.to_vec(),
                },
            );
        } else {
            let ids: Vec<ServiceId> = descriptors.iter().map(|d| d.service_id.clone()).collect();
            self.state_mut(at)?.record_utilization(ids.iter(), now);
            self.metrics.served(at, ids.iter(), now);
            if descriptors.is_empty() {
                self.metrics.report.unresolved += 1;
            } else {
                self.metrics.report.resolved_remotely += 1;
            }
        }
        Ok(())
    }

    fn sweep(&mut self, node: &NodeId) -> Result<(), SimError> {
        let now = self.clock;
        self.pending_sweeps.remove(&(now, node.clone()));
        let state = self.state_mut(node)?;
        state.expire_entries(now);
        if let Some(next) = state.next_expiry() {
            self.ensure_sweep(node, next);
        }
        Ok(())
    }

    fn peer_sync_round(&mut self) {
        let tsds = self.topology.tsds().to_vec();
        for a in &tsds {
            let digest = replica_digest(&self.nodes[a]);
            for b in tsds.iter().filter(|b| *b != a) {
                self.send(a, b, Payload::PeerSync { digest: digest.clone() });
            }
        }
        let next = self.clock + self.params.peer_sync_period;
        if next <= self.params.horizon {
            self.schedule(next, SimAction::PeerSyncRound);
        }
    }

    /// Windowed demand of `service_id` as seen by its origin: the sum over
    /// all LSDs for a global service, over the origin's subtree otherwise.
    pub fn demand(&self, service_id: &ServiceId) -> Option<u64> {
        let origin = self.origins.get(service_id)?;
        let desc = &self.nodes[origin].entry(service_id)?.descriptor;
        let lsds: Vec<&NodeId> = match desc.scope {
            ServiceScope::Global => self.topology.nodes_in_layer(LayerKind::Lsd).collect(),
            ServiceScope::Local => self
                .topology
                .info(origin)
                .map(|i| i.subtree_lsds.iter().collect())
                .unwrap_or_default(),
        };
        let logs = lsds
            .into_iter()
            .map(|l| (l, self.nodes[l].utilization_log()));
        Some(aggregate_hotness(logs, service_id, self.clock, self.params.window_length).total)
    }

    fn review(&mut self) {
        let now = self.clock;
        let services: Vec<(ServiceId, NodeId)> =
            self.origins.iter().map(|(s, n)| (s.clone(), n.clone())).collect();
        for (id, origin) in services {
            let Some(entry) = self.nodes[&origin].entry(&id) else {
                continue;
            };
            let desc = entry.descriptor.clone();
            let hot = self.demand(&id).unwrap_or(0);
            let decision = recommend(
                &desc,
                self.layer_of(&origin),
                hot,
                &self.params.policy,
                self.last_switch.get(&id).copied(),
                now,
            );
            if decision != SwitchDecision::NoChange {
                self.schedule(
                    now,
                    SimAction::StrategySwitch {
                        service_id: id,
                        decision,
                        hotness: hot,
                    },
                );
            }
        }
        let next = now + self.params.window_length;
        if next <= self.params.horizon {
            self.schedule(next, SimAction::UtilizationReview);
        }
    }

    /// Re-registers a service at its origin under the strategy `decision`
    /// asks for, with a bumped version, and pushes the change. Returns
    /// whether anything changed.
    pub fn apply_switch(&mut self, id: &ServiceId, decision: SwitchDecision) -> Result<bool, SimError> {
        let Some(target) = decision.target() else {
            return Ok(false);
        };
        let now = self.clock;
        let origin = self
            .origins
            .get(id)
            .cloned()
            .ok_or_else(|| SimError::UnknownService(id.clone()))?;
        let state = self.state_mut(&origin)?;
        let prev = state
            .entry(id)
            .filter(|e| e.kind == EntryKind::Registered)
            .map(|e| e.descriptor.clone())
            .ok_or_else(|| SimError::UnknownService(id.clone()))?;
        if prev.strategy == target {
            return Ok(false);
        }
        let ts = state
            .known_version(id)
            .map_or(now, |v| now.max(v.timestamp + 1));
        let mut desc = prev.clone();
        desc.strategy = target;
        desc.version = Version::new(ts, origin.clone());
        state
            .register_service(desc.clone(), now)
            .expect("bumped version at the origin is always accepted");
        self.last_switch.insert(id.clone(), now);
        self.fan_out(&origin, Some(&prev), &desc);
        Ok(true)
    }
}

/// Refreshes every volatile entry among `matches`; returns the new expiries.
fn refresh_volatile(state: &mut DirectoryState, matches: &[ServiceDescriptor], now: Tick) -> Vec<Tick> {
    matches
        .iter()
        .filter_map(|d| state.refresh_entry(&d.service_id, now).ok())
        .collect()
}
