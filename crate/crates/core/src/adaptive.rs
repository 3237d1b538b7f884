//! Utilization-driven switching between persistent push and on-demand
//! caching.
//!
//! LSDs log one record per descriptor handed to a customer. The origin of a
//! service periodically sums those records over a trailing window and asks
//! [`recommend`] whether the service should change strategy. A gap between
//! the promote and demote thresholds plus a per-service cooldown keep a
//! service hovering near one threshold from flapping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::directory::UtilizationRecord;
use crate::model::{LayerKind, NodeId, PropagationStrategy, ServiceDescriptor, ServiceId, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchPolicy {
    /// Requests per window at or above which a VRP service goes PPP.
    pub promote_threshold: u64,
    /// Requests per window at or below which a PPP service goes VRP.
    pub demote_threshold: u64,
    /// Minimum ticks between two switches of the same service.
    pub cooldown: Tick,
}

impl Default for SwitchPolicy {
    fn default() -> Self {
        Self {
            promote_threshold: 10,
            demote_threshold: 2,
            cooldown: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("promote threshold {promote} must exceed demote threshold {demote}")]
pub struct InvalidPolicy {
    pub promote: u64,
    pub demote: u64,
}

impl SwitchPolicy {
    pub fn validate(&self) -> Result<(), InvalidPolicy> {
        if self.promote_threshold > self.demote_threshold {
            Ok(())
        } else {
            Err(InvalidPolicy {
                promote: self.promote_threshold,
                demote: self.demote_threshold,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SwitchDecision {
    PromoteToPpp,
    DemoteToVrp,
    NoChange,
}

impl SwitchDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchDecision::PromoteToPpp => "promote",
            SwitchDecision::DemoteToVrp => "demote",
            SwitchDecision::NoChange => "none",
        }
    }

    pub fn target(self) -> Option<PropagationStrategy> {
        match self {
            SwitchDecision::PromoteToPpp => Some(PropagationStrategy::Ppp),
            SwitchDecision::DemoteToVrp => Some(PropagationStrategy::Vrp),
            SwitchDecision::NoChange => None,
        }
    }
}

/// Demand for one service over `(now - window_length, now]`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Hotness {
    pub total: u64,
    pub per_lsd: BTreeMap<NodeId, u64>,
}

/// Sliding-window count over one node's utilization log.
pub fn hotness(log: &[UtilizationRecord], service_id: &ServiceId, now: Tick, window_length: Tick) -> u64 {
    assert!(window_length >= 1, "window_length must be at least one tick");
    let floor = i128::from(now) - i128::from(window_length);
    log.iter()
        .filter(|r| &r.service_id == service_id)
        .filter(|r| r.tick <= now && i128::from(r.tick) > floor)
        .count() as u64
}

/// Windowed demand aggregated over several LSD logs.
pub fn aggregate_hotness<'a>(
    logs: impl IntoIterator<Item = (&'a NodeId, &'a [UtilizationRecord])>,
    service_id: &ServiceId,
    now: Tick,
    window_length: Tick,
) -> Hotness {
    let mut hot = Hotness::default();
    for (lsd, log) in logs {
        let count = hotness(log, service_id, now, window_length);
        if count > 0 {
            hot.per_lsd.insert(lsd.clone(), count);
        }
        hot.total += count;
    }
    hot
}

pub fn recommend(
    service: &ServiceDescriptor,
    origin_layer: LayerKind,
    hot: u64,
    policy: &SwitchPolicy,
    last_switch: Option<Tick>,
    now: Tick,
) -> SwitchDecision {
    if origin_layer == LayerKind::Lsd {
        return SwitchDecision::NoChange;
    }
    let cooled = last_switch.is_none_or(|t| now.saturating_sub(t) >= policy.cooldown);
    if !cooled {
        return SwitchDecision::NoChange;
    }
    match service.strategy {
        PropagationStrategy::Vrp if hot >= policy.promote_threshold => SwitchDecision::PromoteToPpp,
        PropagationStrategy::Ppp if hot <= policy.demote_threshold => SwitchDecision::DemoteToVrp,
        _ => SwitchDecision::NoChange,
    }
}
