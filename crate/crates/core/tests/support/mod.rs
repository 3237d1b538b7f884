//! Random scenario generation, a brute-force visibility oracle and a
//! placement check, shared by the integration tests.
//!
//! The oracle works from the raw scenario file only: its own parent map,
//! its own rectangle overlap test, its own replay of the registration log.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdsim_core::directory::LookupQuery;
use sdsim_core::propagation::Payload;
use sdsim_core::scenario::{RunSettings, ScenarioFile, ScenarioParams};
use sdsim_core::sim::workload::{DeregistrationSpec, LookupSpec, RegistrationSpec, ServiceSpec, WorkloadSpec};
use sdsim_core::topology::{EdgeSpec, NodeSpec};
use sdsim_core::{
    GeoArea, LayerKind, NodeId, Point, PropagationStrategy, ServiceDescriptor, ServiceScope, SimAction, SimEvent,
    Simulation, TopologySpec,
};

pub const MAX_NODES: usize = 12;
pub const MAX_SERVICES: usize = 8;
pub const MAX_EVENTS: usize = 500;
pub const UNTIL: u64 = 300;

fn rect(rng: &mut ChaCha8Rng, max_side: u32) -> GeoArea {
    let x = rng.random_range(0..90) as f64;
    let y = rng.random_range(0..90) as f64;
    let w = rng.random_range(2..=max_side) as f64;
    let h = rng.random_range(2..=max_side) as f64;
    GeoArea::rect(x, y, x + w, y + h)
}

fn random_topology(rng: &mut ChaCha8Rng) -> TopologySpec {
    let mut nodes: Vec<NodeSpec> = Vec::new();
    let mut edges: Vec<EdgeSpec> = Vec::new();
    let mut nsds: Vec<String> = Vec::new();
    let tsds = rng.random_range(1..=3);
    let latency = |rng: &mut ChaCha8Rng| rng.random_bool(0.3).then(|| rng.random_range(1..=3));
    for t in 0..tsds {
        nodes.push(NodeSpec {
            id: format!("t{t}").into(),
            layer: LayerKind::Tsd,
            coverage: None,
        });
    }
    let add = |nodes: &mut Vec<NodeSpec>, edges: &mut Vec<EdgeSpec>, rng: &mut ChaCha8Rng, parent: &str, id: String, layer| {
        let id = if id.is_empty() { format!("l{}", nodes.len()) } else { id };
        let coverage = (layer == LayerKind::Lsd).then(|| rect(rng, 30));
        nodes.push(NodeSpec {
            id: id.as_str().into(),
            layer,
            coverage,
        });
        edges.push(EdgeSpec {
            parent: parent.into(),
            child: id.as_str().into(),
            latency: latency(rng),
        });
    };
    for t in 0..tsds {
        let n = format!("n{}", nsds.len());
        add(&mut nodes, &mut edges, rng, &format!("t{t}"), n.clone(), LayerKind::Nsd);
        add(&mut nodes, &mut edges, rng, &n, String::new(), LayerKind::Lsd);
        nsds.push(n);
    }
    let target = rng.random_range(nodes.len()..=MAX_NODES);
    while nodes.len() < target {
        if nodes.len() + 2 <= MAX_NODES && rng.random_bool(0.3) {
            let parent = if rng.random_bool(0.5) {
                nsds.choose(rng).unwrap().clone()
            } else {
                format!("t{}", rng.random_range(0..tsds))
            };
            let n = format!("n{}", nsds.len());
            add(&mut nodes, &mut edges, rng, &parent, n.clone(), LayerKind::Nsd);
            add(&mut nodes, &mut edges, rng, &n, String::new(), LayerKind::Lsd);
            nsds.push(n);
        } else {
            let parent = nsds.choose(rng).unwrap().clone();
            add(&mut nodes, &mut edges, rng, &parent, String::new(), LayerKind::Lsd);
        }
    }
    TopologySpec {
        nodes,
        edges,
        tsd_peers: None,
        peer_latency: rng.random_bool(0.5).then(|| rng.random_range(1..=4)),
    }
}

const NAMES: [&str; 3] = ["alpha", "beta", "gamma"];
const TAGS: [&str; 2] = ["x", "y"];

fn random_service(rng: &mut ChaCha8Rng, id: &str, scope: ServiceScope) -> ServiceSpec {
    ServiceSpec {
        id: id.into(),
        provider: "sp".into(),
        name: NAMES.choose(rng).unwrap().to_string(),
        tags: TAGS.iter().filter(|_| rng.random_bool(0.5)).map(|t| t.to_string()).collect(),
        scope,
        area: (scope == ServiceScope::Local).then(|| rect(rng, 60)),
        access: String::new(),
        strategy: if rng.random_bool(0.5) {
            PropagationStrategy::Ppp
        } else {
            PropagationStrategy::Vrp
        },
    }
}

fn random_query(rng: &mut ChaCha8Rng, lsd: &NodeSpec) -> LookupQuery {
    match rng.random_range(0..4) {
        0 => LookupQuery::default(),
        1 => LookupQuery::by_name(*NAMES.choose(rng).unwrap()),
        2 => LookupQuery::by_tag(*TAGS.choose(rng).unwrap()),
        _ => {
            let c = lsd.coverage.unwrap();
            LookupQuery {
                position: Some(Point {
                    x: (c.x_min() + c.x_max()) / 2.0,
                    y: (c.y_min() + c.y_max()) / 2.0,
                }),
                ..LookupQuery::default()
            }
        }
    }
}

/// A valid scenario within the corpus bounds, fully determined by `seed`.
///
/// Each service lives at one node for the whole run. Its lifecycle is a
/// registration, optionally followed by an update, a deregistration and a
/// re-registration, at strictly increasing ticks. Every workload event
/// happens before tick 250 so at least one anti-entropy round follows it.
pub fn random_scenario(seed: u64) -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topology = random_topology(&mut rng);
    let of_layer = |l: LayerKind| -> Vec<NodeSpec> {
        topology.nodes.iter().filter(|n| n.layer == l).cloned().collect()
    };
    let (tsds, nsds, lsds) = (of_layer(LayerKind::Tsd), of_layer(LayerKind::Nsd), of_layer(LayerKind::Lsd));
    let locals: Vec<NodeSpec> = nsds.iter().chain(&lsds).cloned().collect();

    let mut workload = WorkloadSpec::default();
    for s in 0..rng.random_range(1..=MAX_SERVICES) {
        let id = format!("s{s}");
        let scope = if rng.random_bool(0.4) { ServiceScope::Global } else { ServiceScope::Local };
        let node = match scope {
            ServiceScope::Global => tsds.choose(&mut rng).unwrap().id.clone(),
            ServiceScope::Local => locals.choose(&mut rng).unwrap().id.clone(),
        };
        let mut tick = rng.random_range(0..80);
        workload.registrations.push(RegistrationSpec {
            tick,
            node: node.clone(),
            service: random_service(&mut rng, &id, scope),
        });
        if rng.random_bool(0.4) {
            tick += rng.random_range(1..50);
            workload.registrations.push(RegistrationSpec {
                tick,
                node: node.clone(),
                service: random_service(&mut rng, &id, scope),
            });
        }
        if rng.random_bool(0.4) {
            tick += rng.random_range(1..50);
            workload.deregistrations.push(DeregistrationSpec {
                tick,
                node: node.clone(),
                service_id: id.as_str().into(),
            });
            if rng.random_bool(0.3) {
                tick += rng.random_range(1..50);
                workload.registrations.push(RegistrationSpec {
                    tick,
                    node: node.clone(),
                    service: random_service(&mut rng, &id, scope),
                });
            }
        }
    }
    let budget = MAX_EVENTS - workload.registrations.len() - workload.deregistrations.len();
    for _ in 0..rng.random_range(0..=budget.min(300)) {
        let lsd = lsds.choose(&mut rng).unwrap();
        workload.lookups.push(LookupSpec {
            tick: rng.random_range(0..250),
            lsd: lsd.id.clone(),
            query: random_query(&mut rng, lsd),
        });
    }
    ScenarioFile {
        topology,
        params: ScenarioParams {
            base_ttl: rng.random_range(5..=40),
            peer_sync_period: rng.random_range(5..=30),
            default_latency: rng.random_range(1..=2),
            seed,
            ..ScenarioParams::default()
        },
        workload,
        run: RunSettings {
            until: UNTIL,
            adaptive: false,
        },
    }
}

pub fn event_count(file: &ScenarioFile) -> usize {
    let w = &file.workload;
    w.registrations.len() + w.deregistrations.len() + w.lookups.len()
}

/// Parent links and LSD coverages read straight from the file.
pub struct RawTree {
    pub parent: BTreeMap<NodeId, NodeId>,
    pub layer: BTreeMap<NodeId, LayerKind>,
    pub coverage: BTreeMap<NodeId, GeoArea>,
}

impl RawTree {
    pub fn new(spec: &TopologySpec) -> Self {
        Self {
            parent: spec.edges.iter().map(|e| (e.child.clone(), e.parent.clone())).collect(),
            layer: spec.nodes.iter().map(|n| (n.id.clone(), n.layer)).collect(),
            coverage: spec.nodes.iter().filter_map(|n| n.coverage.map(|c| (n.id.clone(), c))).collect(),
        }
    }

    /// `anc` is `node` or lies on its path to the root.
    pub fn at_or_below(&self, node: &NodeId, anc: &NodeId) -> bool {
        let mut cur = node;
        loop {
            if cur == anc {
                return true;
            }
            match self.parent.get(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    pub fn tsds(&self) -> Vec<NodeId> {
        self.layer.iter().filter(|(_, l)| **l == LayerKind::Tsd).map(|(n, _)| n.clone()).collect()
    }

    /// Some LSD at or below `node` has coverage overlapping `area`.
    pub fn relevant(&self, node: &NodeId, area: &GeoArea) -> bool {
        self.coverage
            .iter()
            .any(|(lsd, c)| self.at_or_below(lsd, node) && overlap(c, area))
    }
}

/// Positive-area rectangle overlap.
pub fn overlap(a: &GeoArea, b: &GeoArea) -> bool {
    a.x_min().max(b.x_min()) < a.x_max().min(b.x_max()) && a.y_min().max(b.y_min()) < a.y_max().min(b.y_max())
}

/// What a node shows for one service: everything but the version.
pub type Visible = (String, String, Vec<String>, ServiceScope, String, PropagationStrategy);

fn visible_from_spec(s: &ServiceSpec) -> Visible {
    (
        s.id.to_string(),
        s.name.clone(),
        s.tags.iter().cloned().collect(),
        s.scope,
        s.area.unwrap_or(GeoArea::FULL).to_string(),
        s.strategy,
    )
}

pub fn visible_from_descriptor(d: &ServiceDescriptor) -> Visible {
    (
        d.service_id.to_string(),
        d.name.clone(),
        d.tags.iter().cloned().collect(),
        d.scope,
        d.relevance_area.to_string(),
        d.strategy,
    )
}

/// Per-node visible services once every message is delivered and every
/// volatile cache has expired.
///
/// A service in its final registered form is visible at its origin; if
/// persistent, at every strict descendant with a relevant LSD below it;
/// if global, additionally at every other TSD and, when persistent, at
/// their relevant descendants. On-demand copies contribute nothing at
/// quiescence since no demand remains to refresh them.
pub fn oracle(file: &ScenarioFile) -> BTreeMap<NodeId, BTreeSet<Visible>> {
    let tree = RawTree::new(&file.topology);
    let mut log: Vec<(u64, u8, NodeId, Option<ServiceSpec>, String)> = Vec::new();
    for r in &file.workload.registrations {
        log.push((r.tick, 0, r.node.clone(), Some(r.service.clone()), r.service.id.to_string()));
    }
    for d in &file.workload.deregistrations {
        log.push((d.tick, 1, d.node.clone(), None, d.service_id.to_string()));
    }
    log.sort_by_key(|(t, order, ..)| (*t, *order));
    let mut last: BTreeMap<String, (NodeId, Option<ServiceSpec>)> = BTreeMap::new();
    for (_, _, node, spec, id) in log {
        let legal_layer = |l: LayerKind, scope| match scope {
            ServiceScope::Global => l == LayerKind::Tsd,
            ServiceScope::Local => l != LayerKind::Tsd,
        };
        match spec {
            Some(s) if legal_layer(tree.layer[&node], s.scope) => {
                last.insert(id, (node, Some(s)));
            }
            Some(_) => {}
            None => {
                if let Some(entry) = last.get_mut(&id) {
                    if entry.0 == node {
                        entry.1 = None;
                    }
                }
            }
        }
    }

    let mut out: BTreeMap<NodeId, BTreeSet<Visible>> =
        tree.layer.keys().map(|n| (n.clone(), BTreeSet::new())).collect();
    for (origin, spec) in last.values() {
        let Some(spec) = spec else { continue };
        let area = spec.area.unwrap_or(GeoArea::FULL);
        let mut roots = vec![origin.clone()];
        if spec.scope == ServiceScope::Global {
            roots = tree.tsds();
        }
        for node in tree.layer.keys() {
            let here = roots.iter().any(|root| {
                node == root
                    || (spec.strategy == PropagationStrategy::Ppp
                        && tree.at_or_below(node, root)
                        && tree.relevant(node, &area))
            });
            if here {
                out.get_mut(node).unwrap().insert(visible_from_spec(spec));
            }
        }
    }
    out
}

/// Visible services per node as the simulator holds them now.
pub fn observed(sim: &Simulation) -> BTreeMap<NodeId, BTreeSet<Visible>> {
    sim.nodes()
        .iter()
        .map(|(id, state)| {
            let seen = state
                .find(&LookupQuery::default(), sim.clock(), None)
                .iter()
                .map(visible_from_descriptor)
                .collect();
            (id.clone(), seen)
        })
        .collect()
}

/// Descriptors in `sim` or carried by `event` that sit somewhere they may
/// never be: a local descriptor outside its origin's subtree, or stored at
/// a node with no relevant LSD below it. Global descriptors may be
/// anywhere below any TSD.
pub fn placement_violations(tree: &RawTree, sim: &Simulation, event: Option<&SimEvent>) -> Vec<String> {
    let mut out = Vec::new();
    for (node, state) in sim.nodes() {
        for e in state.entries().values() {
            let d = &e.descriptor;
            if node == &d.origin_node {
                continue;
            }
            let ok = match d.scope {
                ServiceScope::Global => tree.layer[&d.origin_node] == LayerKind::Tsd,
                ServiceScope::Local => {
                    tree.at_or_below(node, &d.origin_node) && tree.relevant(node, &d.relevance_area)
                }
            };
            if !ok {
                out.push(format!("{} from {} stored at {node}", d.service_id, d.origin_node));
            }
        }
    }
    if let Some(SimEvent {
        action: SimAction::DeliverMessage(msg),
        ..
    }) = event
    {
        let carried: Vec<&ServiceDescriptor> = match &msg.payload {
            Payload::Push { descriptor, .. } => vec![descriptor],
            Payload::Response { descriptors, .. } => descriptors.iter().collect(),
            Payload::PeerSync { digest } => digest.entries.values().collect(),
            _ => Vec::new(),
        };
        for d in carried {
            let ok = match d.scope {
                ServiceScope::Global => true,
                ServiceScope::Local => tree.at_or_below(&msg.to, &d.origin_node) && msg.to != d.origin_node,
            };
            if !ok {
                out.push(format!("{} from {} carried to {}", d.service_id, d.origin_node, msg.to));
            }
        }
    }
    out
}
