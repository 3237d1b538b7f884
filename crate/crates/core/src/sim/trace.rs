//! Tab-separated event trace, one line per executed event.

use std::fmt;

use crate::sim::{SimAction, SimEvent};

pub const TRACE_HEADER: &str = "# tick\tseq\tnode\taction\tservice\tmessage";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub tick: u64,
    pub seq: u64,
    /// `*` for events that concern the whole network.
    pub node: String,
    pub action: &'static str,
    /// Service id, query label for lookups, `-` when absent.
    pub service: String,
    /// Message kind for deliveries, strategy or decision otherwise.
    pub kind: String,
}

impl TraceRecord {
    pub fn from_event(event: &SimEvent) -> Self {
        let dash = || "-".to_owned();
        let (node, action, service, kind) = match &event.action {
            SimAction::DeliverMessage(msg) => (
                msg.to.to_string(),
                "deliver",
                msg.subject().map_or_else(dash, |s| s.to_string()),
                msg.kind().to_string(),
            ),
            SimAction::CustomerLookup { lsd, query } => {
                (lsd.to_string(), "lookup", query.label(), dash())
            }
            SimAction::RegisterService { node, service } => (
                node.to_string(),
                "register",
                service.id.to_string(),
                service.strategy.to_string(),
            ),
            SimAction::DeregisterService { node, service_id } => {
                (node.to_string(), "deregister", service_id.to_string(), dash())
            }
            SimAction::PeerSyncRound => ("*".to_owned(), "peer-sync-round", dash(), dash()),
            SimAction::ExpirySweep { node } => (node.to_string(), "expiry-sweep", dash(), dash()),
            SimAction::UtilizationReview => ("*".to_owned(), "utilization-review", dash(), dash()),
            SimAction::StrategySwitch {
                service_id,
                decision,
                ..
            } => (
                "*".to_owned(),
                "strategy-switch",
                service_id.to_string(),
                decision.as_str().to_owned(),
            ),
        };
        Self {
            tick: event.at,
            seq: event.seq,
            node,
            action,
            service,
            kind,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.tick, self.seq, self.node, self.action, self.service, self.kind
        )
    }
}

/// Header plus one line per event, newline-terminated.
pub fn format_trace<'a>(events: impl IntoIterator<Item = &'a SimEvent>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for e in events {
        out.push_str(&TraceRecord::from_event(e).to_string());
        out.push('\n');
    }
    out
}
