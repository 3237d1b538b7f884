//! Domain types shared by the directory, propagation and simulation layers.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geo::GeoArea;

/// Simulation time in integer ticks.
pub type Tick = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a directory node (TSD, NSD or LSD).
    NodeId
);
string_id!(
    /// Globally unique service identifier.
    ServiceId
);
string_id!(ProviderId);

/// Hierarchy layer of a directory node. Ordered `Lsd < Nsd < Tsd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "LSD")]
    Lsd,
    #[serde(rename = "NSD")]
    Nsd,
    #[serde(rename = "TSD")]
    Tsd,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Tsd, LayerKind::Nsd, LayerKind::Lsd];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Tsd => "TSD",
            LayerKind::Nsd => "NSD",
            LayerKind::Lsd => "LSD",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceScope {
    Global,
    Local,
}

impl ServiceScope {
    /// Whether a service of this scope may be registered at a node of `layer`.
    pub fn registrable_at(self, layer: LayerKind) -> bool {
        match self {
            ServiceScope::Global => layer == LayerKind::Tsd,
            ServiceScope::Local => layer != LayerKind::Tsd,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceScope::Global => "global",
            ServiceScope::Local => "local",
        }
    }
}

/// How a service travels down the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PropagationStrategy {
    /// Persistent preemptive: pushed to every relevant descendant at publication.
    #[serde(rename = "PPP")]
    Ppp,
    /// Volatile reactive: fetched on demand and cached with a TTL.
    #[serde(rename = "VRP")]
    Vrp,
}

impl fmt::Display for PropagationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PropagationStrategy::Ppp => "PPP",
            PropagationStrategy::Vrp => "VRP",
        })
    }
}

/// Last-writer-wins version: logical timestamp first, node id as tiebreak.
///
/// The derived ordering compares fields in declaration order, which is
/// exactly that rule.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub timestamp: u64,
    pub node: NodeId,
}

impl Version {
    pub fn new(timestamp: u64, node: impl Into<NodeId>) -> Self {
        Self {
            timestamp,
            node: node.into(),
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.timestamp, self.node)
    }
}

pub fn version_order(a: &Version, b: &Version) -> Ordering {
    a.cmp(b)
}

/// The published unit held by directories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub service_id: ServiceId,
    pub provider_id: ProviderId,
    pub name: String,
    pub tags: BTreeSet<String>,
    pub scope: ServiceScope,
    pub relevance_area: GeoArea,
    /// Opaque formal access description (e.g. a WSDL document).
    pub access_description: String,
    pub version: Version,
    pub origin_node: NodeId,
    pub strategy: PropagationStrategy,
}

impl ServiceDescriptor {
    pub fn is_global(&self) -> bool {
        self.scope == ServiceScope::Global
    }
}

/// Deletion marker. Its version is strictly greater than the version of
/// the descriptor it deletes, so it wins every later version comparison
/// against that descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub service_id: ServiceId,
    pub version: Version,
    pub origin_node: NodeId,
}
