//! Hierarchical, geographically scoped service directories for vehicular
//! networks, and a deterministic simulator for them.
//!
//! Directories form trees of three layers. Top-level directories (TSD) hold
//! global services and synchronise with each other; network directories
//! (NSD) and local directories (LSD) hold services relevant to an area. A
//! service is either pushed down to every in-scope directory at
//! registration (PPP) or fetched on demand and cached with a TTL (VRP).

pub mod adaptive;
pub mod directory;
pub mod geo;
pub mod model;
pub mod propagation;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use adaptive::{recommend, SwitchDecision, SwitchPolicy};
pub use directory::{DirectoryEntry, DirectoryError, DirectoryState, EntryKind, LookupQuery};
pub use geo::{area_intersects, GeoArea, Point};
pub use model::{
    LayerKind, NodeId, PropagationStrategy, ProviderId, ServiceDescriptor, ServiceId,
    ServiceScope, Tick, Tombstone, Version,
};
pub use propagation::{ppp_targets, tsd_peer_sync, MessageKind, PropagationMessage};
pub use scenario::{parse_scenario, Scenario, ScenarioError, ScenarioFile};
pub use sim::metrics::MetricsReport;
pub use sim::workload::{generate_workload, ServiceSpec, WorkloadSpec};
pub use sim::{SimAction, SimError, SimEvent, SimParams, Simulation};
pub use topology::{validate_topology, Topology, TopologySpec, TopologyViolation};
