//! Directory hierarchy: declaration, validation and tree queries.
//!
//! A [`TopologySpec`] is the raw, serializable declaration. Passing it
//! through [`validate_topology`] yields an immutable [`Topology`] whose tree
//! shape is guaranteed:
//!
//! * TSDs have no parent and form a full peer mesh.
//! * Every NSD has exactly one parent, an NSD or a TSD.
//! * Every LSD has exactly one parent, an NSD, no children, and a coverage area.
//! * Following parents from any node reaches exactly one TSD.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::GeoArea;
use crate::model::{LayerKind, NodeId, Tick};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub layer: LayerKind,
    /// Radio coverage of the IRS hosting an LSD. Required for LSDs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<GeoArea>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub parent: NodeId,
    pub child: NodeId,
    /// Per-edge message delay; the simulation default applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<Tick>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    /// Optional explicit TSD peer set; must equal the set of TSD nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tsd_peers: Option<Vec<NodeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer_latency: Option<Tick>,
}

impl TopologySpec {
    pub fn node(mut self, id: &str, layer: LayerKind) -> Self {
        self.nodes.push(NodeSpec {
            id: id.into(),
            layer,
            coverage: None,
        });
        self
    }

    pub fn lsd(mut self, id: &str, coverage: GeoArea) -> Self {
        self.nodes.push(NodeSpec {
            id: id.into(),
            layer: LayerKind::Lsd,
            coverage: Some(coverage),
        });
        self
    }

    pub fn edge(mut self, parent: &str, child: &str) -> Self {
        self.edges.push(EdgeSpec {
            parent: parent.into(),
            child: child.into(),
            latency: None,
        });
        self
    }

    pub fn edge_with_latency(mut self, parent: &str, child: &str, latency: Tick) -> Self {
        self.edges.push(EdgeSpec {
            parent: parent.into(),
            child: child.into(),
            latency: Some(latency),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum TopologyViolation {
    NoTsd,
    DuplicateNode(NodeId),
    UnknownNode { edge: (NodeId, NodeId), missing: NodeId },
    SelfLoop(NodeId),
    LsdHasChildren { lsd: NodeId, child: NodeId },
    LsdParentNotNsd { lsd: NodeId, parent: NodeId, parent_layer: LayerKind },
    TsdHasParent { tsd: NodeId, parent: NodeId },
    MultipleParents { child: NodeId, parents: Vec<NodeId> },
    MissingParent(NodeId),
    Cycle(Vec<NodeId>),
    LsdMissingCoverage(NodeId),
    ZeroLatency { parent: NodeId, child: NodeId },
    ZeroPeerLatency,
    PeerSetMismatch { declared: Vec<NodeId>, actual: Vec<NodeId> },
}

impl fmt::Display for TopologyViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TopologyViolation::*;
        match self {
            NoTsd => write!(f, "topology has no TSD"),
            DuplicateNode(id) => write!(f, "node {id} declared more than once"),
            UnknownNode { edge, missing } => {
                write!(f, "edge {} -> {} references undeclared node {missing}", edge.0, edge.1)
            }
            SelfLoop(id) => write!(f, "node {id} is its own parent"),
            LsdHasChildren { lsd, child } => {
                write!(f, "LSD cannot have children: {lsd} -> {child}")
            }
            LsdParentNotNsd {
                lsd,
                parent,
                parent_layer,
            } => write!(f, "LSD {lsd} must hang below an NSD, not {parent_layer} {parent}"),
            TsdHasParent { tsd, parent } => write!(f, "TSD {tsd} cannot have a parent ({parent})"),
            MultipleParents { child, parents } => {
                let list: Vec<&str> = parents.iter().map(NodeId::as_str).collect();
                write!(f, "node {child} has several parents: {}", list.join(", "))
            }
            MissingParent(id) => write!(f, "node {id} has no parent"),
            Cycle(ids) => {
                let list: Vec<&str> = ids.iter().map(NodeId::as_str).collect();
                write!(f, "parent cycle through {}", list.join(" -> "))
            }
            LsdMissingCoverage(id) => write!(f, "LSD {id} has no coverage area"),
            ZeroLatency { parent, child } => {
                write!(f, "edge {parent} -> {child} has latency 0 (minimum is 1)")
            }
            ZeroPeerLatency => write!(f, "peer latency must be at least 1"),
            PeerSetMismatch { declared, actual } => write!(
                f,
                "tsd_peers {:?} must list exactly the TSD nodes {:?}",
                declared.iter().map(NodeId::as_str).collect::<Vec<_>>(),
                actual.iter().map(NodeId::as_str).collect::<Vec<_>>()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfo {
    pub layer: LayerKind,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub coverage: Option<GeoArea>,
    /// Number of parent links to the root TSD.
    pub depth: usize,
    pub parent_latency: Option<Tick>,
    /// LSDs in this node's subtree, including itself for an LSD.
    pub subtree_lsds: Vec<NodeId>,
}

/// A validated, immutable directory hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: BTreeMap<NodeId, NodeInfo>,
    tsds: Vec<NodeId>,
    peer_latency: Option<Tick>,
}

pub fn validate_topology(spec: &TopologySpec) -> Result<Topology, Vec<TopologyViolation>> {
    use TopologyViolation as V;
    let mut violations = BTreeSet::new();

    let mut layers: BTreeMap<&NodeId, &NodeSpec> = BTreeMap::new();
    for node in &spec.nodes {
        if layers.insert(&node.id, node).is_some() {
            violations.insert(V::DuplicateNode(node.id.clone()));
        }
        if node.layer == LayerKind::Lsd && node.coverage.is_none() {
            violations.insert(V::LsdMissingCoverage(node.id.clone()));
        }
    }
    let actual_tsds: Vec<NodeId> = layers
        .values()
        .filter(|n| n.layer == LayerKind::Tsd)
        .map(|n| n.id.clone())
        .collect();
    if actual_tsds.is_empty() {
        violations.insert(V::NoTsd);
    }
    if let Some(declared) = &spec.tsd_peers {
        let declared_set: BTreeSet<&NodeId> = declared.iter().collect();
        let actual_set: BTreeSet<&NodeId> = actual_tsds.iter().collect();
        if declared_set != actual_set || declared_set.len() != declared.len() {
            violations.insert(V::PeerSetMismatch {
                declared: declared.clone(),
                actual: actual_tsds.clone(),
            });
        }
    }
    if spec.peer_latency == Some(0) {
        violations.insert(V::ZeroPeerLatency);
    }

    let mut parents: BTreeMap<&NodeId, Vec<(&NodeId, Option<Tick>)>> = BTreeMap::new();
    for edge in &spec.edges {
        let pair = (edge.parent.clone(), edge.child.clone());
        let mut known = true;
        for end in [&edge.parent, &edge.child] {
            if !layers.contains_key(end) {
                violations.insert(V::UnknownNode {
                    edge: pair.clone(),
                    missing: end.clone(),
                });
                known = false;
            }
        }
        if edge.latency == Some(0) {
            violations.insert(V::ZeroLatency {
                parent: edge.parent.clone(),
                child: edge.child.clone(),
            });
        }
        if !known {
            continue;
        }
        if edge.parent == edge.child {
            violations.insert(V::SelfLoop(edge.child.clone()));
            continue;
        }
        let parent_layer = layers[&edge.parent].layer;
        let child_layer = layers[&edge.child].layer;
        if parent_layer == LayerKind::Lsd {
            violations.insert(V::LsdHasChildren {
                lsd: edge.parent.clone(),
                child: edge.child.clone(),
            });
        }
        match child_layer {
            LayerKind::Tsd => {
                violations.insert(V::TsdHasParent {
                    tsd: edge.child.clone(),
                    parent: edge.parent.clone(),
                });
            }
            LayerKind::Lsd if parent_layer != LayerKind::Nsd && parent_layer != LayerKind::Lsd => {
                violations.insert(V::LsdParentNotNsd {
                    lsd: edge.child.clone(),
                    parent: edge.parent.clone(),
                    parent_layer,
                });
            }
            _ => {}
        }
        parents
            .entry(&edge.child)
            .or_default()
            .push((&edge.parent, edge.latency));
    }

    for (child, ps) in &parents {
        if ps.len() > 1 {
            let mut list: Vec<NodeId> = ps.iter().map(|(p, _)| (*p).clone()).collect();
            list.sort();
            violations.insert(V::MultipleParents {
                child: (*child).clone(),
                parents: list,
            });
        }
    }
    for node in layers.values() {
        if node.layer != LayerKind::Tsd && !parents.contains_key(&node.id) {
            violations.insert(V::MissingParent(node.id.clone()));
        }
    }

    // Cycle detection over the first-parent relation.
    let first_parent = |id: &NodeId| parents.get(id).map(|ps| ps[0].0);
    let mut reported: BTreeSet<Vec<NodeId>> = BTreeSet::new();
    for start in layers.keys() {
        let mut path: Vec<&NodeId> = vec![start];
        let mut cursor = *start;
        while let Some(p) = first_parent(cursor) {
            if let Some(pos) = path.iter().position(|n| *n == p) {
                let mut cycle: Vec<NodeId> = path[pos..].iter().map(|n| (*n).clone()).collect();
                // Canonical rotation so each cycle is reported once.
                let min = cycle.iter().enumerate().min_by_key(|(_, n)| *n).map(|(i, _)| i).unwrap();
                cycle.rotate_left(min);
                if reported.insert(cycle.clone()) {
                    violations.insert(V::Cycle(cycle));
                }
                break;
            }
            path.push(p);
            cursor = p;
        }
    }

    if !violations.is_empty() {
        return Err(violations.into_iter().collect());
    }

    let mut nodes: BTreeMap<NodeId, NodeInfo> = layers
        .values()
        .map(|n| {
            let parent = parents.get(&n.id).map(|ps| ps[0]);
            (
                n.id.clone(),
                NodeInfo {
                    layer: n.layer,
                    parent: parent.map(|(p, _)| p.clone()),
                    children: Vec::new(),
                    coverage: n.coverage,
                    depth: 0,
                    parent_latency: parent.and_then(|(_, l)| l),
                    subtree_lsds: Vec::new(),
                },
            )
        })
        .collect();

    let child_links: Vec<(NodeId, NodeId)> = nodes
        .iter()
        .filter_map(|(id, info)| info.parent.clone().map(|p| (p, id.clone())))
        .collect();
    for (parent, child) in child_links {
        nodes.get_mut(&parent).unwrap().children.push(child);
    }

    let ids: Vec<NodeId> = nodes.keys().cloned().collect();
    for id in &ids {
        let mut depth = 0;
        let mut cursor = id.clone();
        while let Some(p) = nodes[&cursor].parent.clone() {
            depth += 1;
            if nodes[id].layer == LayerKind::Lsd {
                nodes.get_mut(&p).unwrap().subtree_lsds.push(id.clone());
            }
            cursor = p;
        }
        let info = nodes.get_mut(id).unwrap();
        info.depth = depth;
        if info.layer == LayerKind::Lsd {
            info.subtree_lsds.push(id.clone());
        }
    }
    for info in nodes.values_mut() {
        info.children.sort();
        info.subtree_lsds.sort();
    }

    Ok(Topology {
        nodes,
        tsds: actual_tsds,
        peer_latency: spec.peer_latency,
    })
}

impl Topology {
    pub fn contains(&self, id: &NodeId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn info(&self, id: &NodeId) -> Option<&NodeInfo> {
        self.nodes.get(id)
    }

    fn get(&self, id: &NodeId) -> &NodeInfo {
        self.nodes
            .get(id)
            .unwrap_or_else(|| panic!("unknown node {id}"))
    }

    /// All node ids in sorted order.
    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn layer(&self, id: &NodeId) -> Option<LayerKind> {
        self.nodes.get(id).map(|n| n.layer)
    }

    pub fn parent(&self, id: &NodeId) -> Option<&NodeId> {
        self.get(id).parent.as_ref()
    }

    pub fn children(&self, id: &NodeId) -> &[NodeId] {
        &self.get(id).children
    }

    pub fn coverage(&self, id: &NodeId) -> Option<&GeoArea> {
        self.get(id).coverage.as_ref()
    }

    pub fn depth(&self, id: &NodeId) -> usize {
        self.get(id).depth
    }

    pub fn tsds(&self) -> &[NodeId] {
        &self.tsds
    }

    pub fn nodes_in_layer(&self, layer: LayerKind) -> impl Iterator<Item = &NodeId> {
        self.nodes
            .iter()
            .filter(move |(_, n)| n.layer == layer)
            .map(|(id, _)| id)
    }

    pub fn layer_counts(&self) -> BTreeMap<LayerKind, usize> {
        let mut counts = BTreeMap::new();
        for info in self.nodes.values() {
            *counts.entry(info.layer).or_insert(0) += 1;
        }
        counts
    }

    /// The TSD at the top of `id`'s tree.
    pub fn root<'a>(&'a self, id: &'a NodeId) -> &'a NodeId {
        let mut cursor = id;
        while let Some(p) = self.get(cursor).parent.as_ref() {
            cursor = p;
        }
        cursor
    }

    /// Strict ancestors, nearest first.
    pub fn ancestors(&self, id: &NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut cursor = id;
        while let Some(p) = self.get(cursor).parent.as_ref() {
            out.push(p.clone());
            cursor = p;
        }
        out
    }

    pub fn is_strict_ancestor(&self, ancestor: &NodeId, of: &NodeId) -> bool {
        let mut cursor = of;
        while let Some(p) = self.get(cursor).parent.as_ref() {
            if p == ancestor {
                return true;
            }
            cursor = p;
        }
        false
    }

    /// Strict descendants in pre-order.
    pub fn descendants(&self, id: &NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack: Vec<&NodeId> = self.get(id).children.iter().rev().collect();
        while let Some(n) = stack.pop() {
            out.push(n.clone());
            stack.extend(self.get(n).children.iter().rev());
        }
        out
    }

    /// Whether the subtree rooted at `id` contains an LSD whose coverage
    /// intersects `area`. For an LSD this is a test of its own coverage.
    pub fn in_scope(&self, id: &NodeId, area: &GeoArea) -> bool {
        self.get(id)
            .subtree_lsds
            .iter()
            .any(|lsd| self.get(lsd).coverage.is_some_and(|c| c.intersects(area)))
    }

    /// Latency override on the edge between `a` and `b` (either direction),
    /// or the peer latency for two TSDs.
    pub fn latency_override(&self, a: &NodeId, b: &NodeId) -> Option<Tick> {
        let (na, nb) = (self.get(a), self.get(b));
        if na.layer == LayerKind::Tsd && nb.layer == LayerKind::Tsd {
            return self.peer_latency;
        }
        if nb.parent.as_ref() == Some(a) {
            nb.parent_latency
        } else if na.parent.as_ref() == Some(b) {
            na.parent_latency
        } else {
            None
        }
    }
}
