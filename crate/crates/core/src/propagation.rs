//! Inter-node distribution: message shapes, target selection, direction
//! rules and TSD peer anti-entropy.
//!
//! Service information only ever flows down the hierarchy. Pushes and
//! deletion syncs travel parent to child, requests climb child to parent and
//! the matching response retraces the request's hop chain. TSDs exchange
//! their full replica state with each other instead of propagating.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::directory::{DirectoryState, EntryKind, LookupQuery};
use crate::geo::GeoArea;
use crate::model::{LayerKind, NodeId, ServiceDescriptor, ServiceId, Tick, Tombstone};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Push,
    Request,
    Response,
    DeleteSync,
    PeerSync,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::Push,
        MessageKind::Request,
        MessageKind::Response,
        MessageKind::DeleteSync,
        MessageKind::PeerSync,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Push => "Push",
            MessageKind::Request => "Request",
            MessageKind::Response => "Response",
            MessageKind::DeleteSync => "DeleteSync",
            MessageKind::PeerSync => "PeerSync",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Full replicated state of a TSD: durable entries plus tombstones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplicaDigest {
    pub entries: BTreeMap<ServiceId, ServiceDescriptor>,
    pub tombstones: BTreeMap<ServiceId, Tombstone>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// `reach` lists the areas whose in-scope subtrees the push must visit:
    /// the descriptor's own area for a persistent push, plus the previous
    /// area of a persistent predecessor whose copies must be demoted.
    Push {
        descriptor: ServiceDescriptor,
        reach: Vec<GeoArea>,
    },
    Request {
        query: LookupQuery,
        hop_chain: Vec<NodeId>,
    },
    Response {
        query: LookupQuery,
        descriptors: Vec<ServiceDescriptor>,
        hop_chain: Vec<NodeId>,
    },
    DeleteSync {
        tombstone: Tombstone,
    },
    PeerSync {
        digest: ReplicaDigest,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMessage {
    pub from: NodeId,
    pub to: NodeId,
    pub sent_at: Tick,
    pub payload: Payload,
}

impl PropagationMessage {
    pub fn kind(&self) -> MessageKind {
        match self.payload {
            Payload::Push { .. } => MessageKind::Push,
            Payload::Request { .. } => MessageKind::Request,
            Payload::Response { .. } => MessageKind::Response,
            Payload::DeleteSync { .. } => MessageKind::DeleteSync,
            Payload::PeerSync { .. } => MessageKind::PeerSync,
        }
    }

    /// Service the message is primarily about, for trace output.
    pub fn subject(&self) -> Option<&ServiceId> {
        match &self.payload {
            Payload::Push { descriptor, .. } => Some(&descriptor.service_id),
            Payload::Response { descriptors, .. } => descriptors.first().map(|d| &d.service_id),
            Payload::DeleteSync { tombstone, .. } => Some(&tombstone.service_id),
            Payload::PeerSync { digest } => {
                if digest.entries.is_empty() && digest.tombstones.len() == 1 {
                    digest.tombstones.keys().next()
                } else {
                    None
                }
            }
            Payload::Request { .. } => None,
        }
    }
}

/// Nodes that receive a persistent push of `desc` registered at `origin`.
///
/// Strict descendants only. An LSD is included when its coverage
/// intersects the relevance area; an intermediate NSD when at least one LSD
/// below it is included. LSD-registered services have no targets.
pub fn ppp_targets(topology: &Topology, origin: &NodeId, desc: &ServiceDescriptor) -> Vec<NodeId> {
    targets_for_area(topology, origin, &desc.relevance_area)
}

pub(crate) fn targets_for_area(topology: &Topology, origin: &NodeId, area: &GeoArea) -> Vec<NodeId> {
    topology
        .descendants(origin)
        .into_iter()
        .filter(|n| topology.in_scope(n, area))
        .collect()
}

/// Direction rule for each message kind on the edge `from -> to`.
pub fn check_edge_legal(topology: &Topology, msg: &PropagationMessage) -> bool {
    let (Some(from_layer), Some(to_layer)) = (topology.layer(&msg.from), topology.layer(&msg.to))
    else {
        return false;
    };
    match msg.kind() {
        MessageKind::Push | MessageKind::DeleteSync | MessageKind::Response => {
            topology.parent(&msg.to) == Some(&msg.from)
        }
        MessageKind::Request => topology.parent(&msg.from) == Some(&msg.to),
        MessageKind::PeerSync => {
            from_layer == LayerKind::Tsd && to_layer == LayerKind::Tsd && msg.from != msg.to
        }
    }
}

/// Durable entries (registered or persistent) and all tombstones.
pub fn replica_digest(state: &DirectoryState) -> ReplicaDigest {
    ReplicaDigest {
        entries: state
            .entries()
            .iter()
            .filter(|(_, e)| e.kind != EntryKind::VolatileCached)
            .map(|(id, e)| (id.clone(), e.descriptor.clone()))
            .collect(),
        tombstones: state.tombstones().clone(),
    }
}

/// Effects of merging a peer digest into local state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MergeChanges {
    /// Newly adopted descriptors, with whatever this node held before.
    pub adopted: Vec<(Option<ServiceDescriptor>, ServiceDescriptor)>,
    /// Entries dropped because a newer tombstone arrived.
    pub deleted: Vec<ServiceDescriptor>,
}

impl MergeChanges {
    pub fn is_empty(&self) -> bool {
        self.adopted.is_empty() && self.deleted.is_empty()
    }
}

/// One-directional last-writer-wins merge of `digest` into `state`.
pub fn merge_digest(state: &mut DirectoryState, digest: &ReplicaDigest, now: Tick) -> MergeChanges {
    let mut changes = MergeChanges::default();
    for tomb in digest.tombstones.values() {
        if let Some(dropped) = state.apply_tombstone(tomb) {
            changes.deleted.push(dropped);
        }
    }
    for desc in digest.entries.values() {
        let prev = state.entry(&desc.service_id).map(|e| e.descriptor.clone());
        if prev.as_ref().is_some_and(|p| p.version >= desc.version) {
            continue;
        }
        if state
            .store_propagated(desc.clone(), EntryKind::PersistentPropagated, None, now)
            .applied()
        {
            changes.adopted.push((prev, desc.clone()));
        }
    }
    changes
}

/// Pairwise anti-entropy between two TSDs. Both results hold, per service,
/// the version-maximal entry or tombstone found on either side.
pub fn tsd_peer_sync(
    a: &DirectoryState,
    b: &DirectoryState,
    now: Tick,
) -> (DirectoryState, DirectoryState) {
    let (da, db) = (replica_digest(a), replica_digest(b));
    let (mut a, mut b) = (a.clone(), b.clone());
    merge_digest(&mut a, &db, now);
    merge_digest(&mut b, &da, now);
    (a, b)
}
