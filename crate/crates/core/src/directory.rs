//! Per-node service directory state.
//!
//! Every node in the hierarchy owns one [`DirectoryState`]. Entries are held
//! with a provenance [`EntryKind`]: registered here, pushed here persistently,
//! or cached here on demand with an expiry tick. Deletions leave a
//! [`Tombstone`] behind that suppresses any store of an equal or older
//! version for the rest of the run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoArea, Point};
use crate::model::{
    LayerKind, NodeId, ServiceDescriptor, ServiceId, ServiceScope, Tick, Tombstone, Version,
};

/// Default cache lifetime of volatile entries, in ticks.
pub const DEFAULT_BASE_TTL: Tick = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Registered,
    PersistentPropagated,
    VolatileCached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub descriptor: ServiceDescriptor,
    pub kind: EntryKind,
    /// Present exactly for volatile entries.
    pub expires_at: Option<Tick>,
    pub refresh_count: u32,
    pub stored_at: Tick,
}

impl DirectoryEntry {
    pub fn is_live(&self, now: Tick) -> bool {
        self.expires_at.is_none_or(|t| t > now)
    }

    pub fn version(&self) -> &Version {
        &self.descriptor.version
    }
}

/// Filtered search. Every present field must match; an empty query matches
/// everything.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookupQuery {
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_prefix: Option<String>,
    /// Matches descriptors whose relevance area contains this point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Point>,
}

impl LookupQuery {
    pub fn by_name(prefix: impl Into<String>) -> Self {
        Self {
            name_prefix: Some(prefix.into()),
            ..Self::default()
        }
    }

    pub fn by_tag(tag: impl Into<String>) -> Self {
        Self {
            tags: BTreeSet::from([tag.into()]),
            ..Self::default()
        }
    }

    pub fn matches(&self, desc: &ServiceDescriptor) -> bool {
        self.tags.iter().all(|t| desc.tags.contains(t))
            && self
                .name_prefix
                .as_deref()
                .is_none_or(|p| desc.name.starts_with(p))
            && self
                .position
                .is_none_or(|p| desc.relevance_area.contains_point(p))
    }

    /// Short human-readable form used in traces.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(p) = &self.name_prefix {
            parts.push(format!("name={p}"));
        }
        if !self.tags.is_empty() {
            parts.push(format!(
                "tags={}",
                self.tags.iter().cloned().collect::<Vec<_>>().join("+")
            ));
        }
        if let Some(p) = self.position {
            parts.push(format!("at={},{}", p.x, p.y));
        }
        if parts.is_empty() {
            "*".to_owned()
        } else {
            parts.join(";")
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilizationRecord {
    pub service_id: ServiceId,
    pub tick: Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupOutcome {
    pub matches: Vec<ServiceDescriptor>,
    /// No local match: the caller should escalate (volatile reactive path).
    pub miss: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DirectoryError {
    #[error("global service {0} may only be registered at a TSD")]
    GlobalAtNonTsd(ServiceId),
    #[error("local service {0} may not be registered at a TSD")]
    LocalAtTsd(ServiceId),
    #[error("service {service} version {offered} is not newer than {existing}")]
    StaleVersion {
        service: ServiceId,
        offered: Version,
        existing: Version,
    },
    #[error("descriptor for {service} names origin {origin}, not this node {node}")]
    WrongOrigin {
        service: ServiceId,
        origin: NodeId,
        node: NodeId,
    },
    #[error("service {0} has no volatile cache entry here")]
    NotCached(ServiceId),
    #[error("service {0} is not registered at this node")]
    NotOrigin(ServiceId),
}

/// Result of [`DirectoryState::store_propagated`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreOutcome {
    Stored,
    /// Volatile entry of the same version promoted to persistent.
    Upgraded,
    IgnoredStale,
    IgnoredTombstoned,
}

impl StoreOutcome {
    pub fn applied(self) -> bool {
        matches!(self, StoreOutcome::Stored | StoreOutcome::Upgraded)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deregistration {
    pub tombstone: Tombstone,
    pub descriptor: ServiceDescriptor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectoryState {
    node_id: NodeId,
    layer: LayerKind,
    base_ttl: Tick,
    entries: BTreeMap<ServiceId, DirectoryEntry>,
    tombstones: BTreeMap<ServiceId, Tombstone>,
    /// Highest descriptor version ever stored per service, surviving expiry.
    high_water: BTreeMap<ServiceId, Version>,
    utilization_log: Vec<UtilizationRecord>,
}

impl DirectoryState {
    pub fn new(node_id: NodeId, layer: LayerKind, base_ttl: Tick) -> Self {
        Self {
            node_id,
            layer,
            base_ttl,
            entries: BTreeMap::new(),
            tombstones: BTreeMap::new(),
            high_water: BTreeMap::new(),
            utilization_log: Vec::new(),
        }
    }

    pub fn node_id(&self) -> &NodeId {
        &self.node_id
    }

    pub fn layer(&self) -> LayerKind {
        self.layer
    }

    pub fn base_ttl(&self) -> Tick {
        self.base_ttl
    }

    pub fn entries(&self) -> &BTreeMap<ServiceId, DirectoryEntry> {
        &self.entries
    }

    pub fn entry(&self, id: &ServiceId) -> Option<&DirectoryEntry> {
        self.entries.get(id)
    }

    pub fn tombstones(&self) -> &BTreeMap<ServiceId, Tombstone> {
        &self.tombstones
    }

    pub fn tombstone(&self, id: &ServiceId) -> Option<&Tombstone> {
        self.tombstones.get(id)
    }

    /// True when a tombstone is held and no newer entry has replaced it.
    pub fn is_deleted(&self, id: &ServiceId) -> bool {
        match (self.tombstones.get(id), self.entries.get(id)) {
            (Some(_), None) => true,
            (Some(t), Some(e)) => t.version >= e.descriptor.version,
            (None, _) => false,
        }
    }

    pub fn utilization_log(&self) -> &[UtilizationRecord] {
        &self.utilization_log
    }

    /// Highest version this node has seen for `id`, as entry or tombstone.
    pub fn known_version(&self, id: &ServiceId) -> Option<&Version> {
        let e = self.high_water.get(id);
        let t = self.tombstones.get(id).map(|t| &t.version);
        e.max(t)
    }

    fn bump_high_water(&mut self, desc: &ServiceDescriptor) {
        let slot = self.high_water.entry(desc.service_id.clone());
        let current = slot.or_insert_with(|| desc.version.clone());
        if *current < desc.version {
            *current = desc.version.clone();
        }
    }

    fn tombstoned_at_or_above(&self, id: &ServiceId, version: &Version) -> bool {
        self.tombstones.get(id).is_some_and(|t| t.version >= *version)
    }

    pub fn register_service(
        &mut self,
        desc: ServiceDescriptor,
        now: Tick,
    ) -> Result<(), DirectoryError> {
        if desc.origin_node != self.node_id {
            return Err(DirectoryError::WrongOrigin {
                service: desc.service_id,
                origin: desc.origin_node,
                node: self.node_id.clone(),
            });
        }
        match desc.scope {
            ServiceScope::Global if self.layer != LayerKind::Tsd => {
                return Err(DirectoryError::GlobalAtNonTsd(desc.service_id))
            }
            ServiceScope::Local if self.layer == LayerKind::Tsd => {
                return Err(DirectoryError::LocalAtTsd(desc.service_id))
            }
            _ => {}
        }
        if let Some(existing) = self.known_version(&desc.service_id) {
            if desc.version <= *existing {
                return Err(DirectoryError::StaleVersion {
                    service: desc.service_id,
                    offered: desc.version,
                    existing: existing.clone(),
                });
            }
        }
        self.bump_high_water(&desc);
        self.entries.insert(
            desc.service_id.clone(),
            DirectoryEntry {
                descriptor: desc,
                kind: EntryKind::Registered,
                expires_at: None,
                refresh_count: 0,
                stored_at: now,
            },
        );
        Ok(())
    }

    /// Live descriptors matching `query`, sorted by `(name, service_id)`.
    ///
    /// `consumer_area`, when given, additionally drops local-scope
    /// descriptors whose relevance area misses it. Nothing is logged.
    pub fn find(
        &self,
        query: &LookupQuery,
        now: Tick,
        consumer_area: Option<&GeoArea>,
    ) -> Vec<ServiceDescriptor> {
        let mut out: Vec<ServiceDescriptor> = self
            .entries
            .values()
            .filter(|e| e.is_live(now))
            .map(|e| &e.descriptor)
            .filter(|d| query.matches(d))
            .filter(|d| {
                d.scope == ServiceScope::Global
                    || consumer_area.is_none_or(|a| d.relevance_area.intersects(a))
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| (&a.name, &a.service_id).cmp(&(&b.name, &b.service_id)));
        out
    }

    /// Customer-facing lookup: like [`find`](Self::find) without an area
    /// filter, and logs one utilization record per returned descriptor.
    pub fn lookup(&mut self, query: &LookupQuery, now: Tick) -> LookupOutcome {
        let matches = self.find(query, now, None);
        self.record_utilization(matches.iter().map(|d| &d.service_id), now);
        LookupOutcome {
            miss: matches.is_empty(),
            matches,
        }
    }

    pub fn record_utilization<'a>(
        &mut self,
        ids: impl IntoIterator<Item = &'a ServiceId>,
        now: Tick,
    ) {
        self.utilization_log
            .extend(ids.into_iter().map(|id| UtilizationRecord {
                service_id: id.clone(),
                tick: now,
            }));
    }

    pub fn store_propagated(
        &mut self,
        desc: ServiceDescriptor,
        kind: EntryKind,
        ttl: Option<Tick>,
        now: Tick,
    ) -> StoreOutcome {
        debug_assert!(kind != EntryKind::Registered, "registrations go through register_service");
        debug_assert!(kind != EntryKind::VolatileCached || ttl.is_some());
        if self.tombstoned_at_or_above(&desc.service_id, &desc.version) {
            return StoreOutcome::IgnoredTombstoned;
        }
        if self.high_water.get(&desc.service_id).is_some_and(|h| *h > desc.version) {
            return StoreOutcome::IgnoredStale;
        }
        let expires_at = match kind {
            EntryKind::VolatileCached => Some(now + ttl.unwrap_or(self.base_ttl)),
            _ => None,
        };
        let mut outcome = StoreOutcome::Stored;
        self.bump_high_water(&desc);
        let mut refresh_count = 0;
        if let Some(existing) = self.entries.get(&desc.service_id) {
            match desc.version.cmp(&existing.descriptor.version) {
                std::cmp::Ordering::Less => return StoreOutcome::IgnoredStale,
                std::cmp::Ordering::Equal => match (existing.kind, kind) {
                    (EntryKind::VolatileCached, EntryKind::PersistentPropagated) => {
                        outcome = StoreOutcome::Upgraded
                    }
                    (EntryKind::VolatileCached, EntryKind::VolatileCached) => {
                        refresh_count = existing.refresh_count
                    }
                    _ => return StoreOutcome::IgnoredStale,
                },
                std::cmp::Ordering::Greater => {}
            }
        }
        self.entries.insert(
            desc.service_id.clone(),
            DirectoryEntry {
                descriptor: desc,
                kind,
                expires_at,
                refresh_count,
                stored_at: now,
            },
        );
        outcome
    }

    /// Resets a volatile entry's expiry to `now + base_ttl`. Returns the new
    /// expiry tick.
    pub fn refresh_entry(&mut self, id: &ServiceId, now: Tick) -> Result<Tick, DirectoryError> {
        let base_ttl = self.base_ttl;
        match self.entries.get_mut(id) {
            Some(e) if e.kind == EntryKind::VolatileCached => {
                let expiry = now + base_ttl;
                e.expires_at = Some(expiry);
                e.refresh_count += 1;
                Ok(expiry)
            }
            _ => Err(DirectoryError::NotCached(id.clone())),
        }
    }

    /// Drops every volatile entry with `expires_at <= now`.
    pub fn expire_entries(&mut self, now: Tick) -> Vec<ServiceId> {
        let expired: Vec<ServiceId> = self
            .entries
            .iter()
            .filter(|(_, e)| e.expires_at.is_some_and(|t| t <= now))
            .map(|(id, _)| id.clone())
            .collect();
        for id in &expired {
            self.entries.remove(id);
        }
        expired
    }

    /// Earliest pending expiry, if any volatile entry is held.
    pub fn next_expiry(&self) -> Option<Tick> {
        self.entries.values().filter_map(|e| e.expires_at).min()
    }

    pub fn deregister_service(
        &mut self,
        id: &ServiceId,
        _now: Tick,
    ) -> Result<Deregistration, DirectoryError> {
        match self.entries.get(id) {
            Some(e) if e.kind == EntryKind::Registered => {}
            _ => return Err(DirectoryError::NotOrigin(id.clone())),
        }
        let entry = self.entries.remove(id).expect("checked above");
        let tombstone = Tombstone {
            service_id: id.clone(),
            version: Version::new(entry.descriptor.version.timestamp + 1, self.node_id.clone()),
            origin_node: self.node_id.clone(),
        };
        self.tombstones.insert(id.clone(), tombstone.clone());
        Ok(Deregistration {
            tombstone,
            descriptor: entry.descriptor,
        })
    }

    /// Records `tomb` (if newer than any held tombstone) and drops an entry
    /// it dominates. Returns the dropped descriptor.
    pub fn apply_tombstone(&mut self, tomb: &Tombstone) -> Option<ServiceDescriptor> {
        let newer = self
            .tombstones
            .get(&tomb.service_id)
            .is_none_or(|t| t.version < tomb.version);
        if newer {
            self.tombstones.insert(tomb.service_id.clone(), tomb.clone());
        }
        match self.entries.get(&tomb.service_id) {
            Some(e) if e.descriptor.version <= tomb.version => self
                .entries
                .remove(&tomb.service_id)
                .map(|e| e.descriptor),
            _ => None,
        }
    }

    /// Drops a propagated copy older than `desc` without storing `desc`.
    /// Used when a newer version is no longer relevant here.
    pub fn discard_older(&mut self, desc: &ServiceDescriptor) -> bool {
        let holds_older = self
            .entries
            .get(&desc.service_id)
            .is_some_and(|e| e.kind != EntryKind::Registered && e.descriptor.version < desc.version);
        if holds_older {
            self.entries.remove(&desc.service_id);
            self.bump_high_water(desc);
        }
        holds_older
    }

    /// Replaces a held copy by a newer descriptor as a volatile entry with a
    /// fresh TTL. Used when a service stops being pushed here; absent or
    /// newer-or-equal copies are left alone.
    pub fn demote_copy(&mut self, desc: &ServiceDescriptor, now: Tick) -> bool {
        let holds_older = self
            .entries
            .get(&desc.service_id)
            .is_some_and(|e| e.kind != EntryKind::Registered && e.descriptor.version < desc.version);
        if !holds_older {
            return false;
        }
        self.store_propagated(desc.clone(), EntryKind::VolatileCached, Some(self.base_ttl), now)
            .applied()
    }
}
